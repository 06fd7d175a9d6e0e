"""Reasoning judges: a deterministic rule-based mock and an HTTP client.

Both expose ``rubric(gt, pred)`` returning an integer score 0..5 and
``triplet(rec, reference)`` returning three booleans (decision match, causal
factors present, cause-effect valid).
"""

import itertools
import json
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

from .._validation import ValidationError
from .lexicon import mentioned_components, parse_intent
from .schema import LateralIntent, LongitudinalIntent
from .validate import validate_record

DEFAULT_TIMEOUT_MS = 10000
DEFAULT_IN_FLIGHT = 4

_OPPOSITE = {
    frozenset({LongitudinalIntent.Accelerate, LongitudinalIntent.Decelerate}),
    frozenset({LongitudinalIntent.Accelerate, LongitudinalIntent.Stop}),
    frozenset({LateralIntent.Left, LateralIntent.Right}),
}


class JudgeTransportError(RuntimeError):
    """The endpoint could not be reached; retrying may help."""


class JudgeProtocolError(ValueError):
    """The endpoint answered with something that is not a valid judgement."""


def component_overlap(gt, pred):
    """Jaccard overlap of the component nouns two traces mention (1.0 if neither names any)."""
    a, b = mentioned_components(gt), mentioned_components(pred)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


class MockJudge:
    """Rule-based stand-in for the reasoning critic.

    Scores follow the rubric tiers: both channel intents agree -> 3 to 5 by
    component overlap; one channel agrees -> 2; neither -> 1; an opposite
    intent on either channel -> 0 or 1; an unparsable prediction -> 0 or 1.
    """

    def __init__(self, full_overlap=0.5, partial_overlap=0.25):
        self.full_overlap = full_overlap
        self.partial_overlap = partial_overlap

    def rubric(self, gt, pred, image=None):
        g, p = parse_intent(gt), parse_intent(pred)
        overlap = component_overlap(gt, pred)
        unknown = (LongitudinalIntent.Unknown, LateralIntent.Unknown)
        if (p.longitudinal_intent, p.lateral_intent) == unknown and (g.longitudinal_intent, g.lateral_intent) != unknown:
            return 1 if overlap > 0 else 0
        pairs = [(g.longitudinal_intent, p.longitudinal_intent), (g.lateral_intent, p.lateral_intent)]
        if any(frozenset(pair) in _OPPOSITE for pair in pairs):
            return 1 if overlap >= self.full_overlap else 0
        matches = sum(a == b for a, b in pairs)
        if matches == 2:
            if overlap >= self.full_overlap:
                return 5
            return 4 if overlap >= self.partial_overlap else 3
        return 2 if matches == 1 else 1

    def triplet(self, rec, reference):
        decision_match = rec.decision == reference.decision
        ref_cats = {c.category for c in reference.components}
        rec_cats = {c.category for c in rec.components}
        factors_present = ref_cats <= rec_cats and (bool(rec_cats) or not ref_cats)
        valid = not validate_record(rec)
        return decision_match, factors_present, valid

    def rubric_many(self, pairs):
        return [self.rubric(gt, pred) for gt, pred in pairs]

    def triplet_many(self, pairs):
        return [self.triplet(rec, ref) for rec, ref in pairs]


class HttpJudge:
    """JSON-over-HTTP judge client with bounded concurrency and retries.

    Requests are POSTed to ``url`` (default: ``COC_JUDGE_URL``). Transport
    failures and 5xx/429 answers are retried with exponential backoff up to
    ``max_attempts``; malformed answers raise :class:`JudgeProtocolError`.
    """

    def __init__(self, url=None, timeout_ms=None, max_in_flight=DEFAULT_IN_FLIGHT,
                 max_attempts=3, backoff_s=0.1):
        self.url = url or os.environ.get("COC_JUDGE_URL")
        if not self.url:
            raise ValidationError("judge URL not configured (set COC_JUDGE_URL)", field="COC_JUDGE_URL")
        if timeout_ms is None:
            timeout_ms = int(os.environ.get("COC_JUDGE_TIMEOUT_MS", DEFAULT_TIMEOUT_MS))
        if timeout_ms <= 0 or max_in_flight < 1 or max_attempts < 1:
            raise ValidationError("timeout, in-flight limit and attempts must be positive", field="judge")
        self.timeout_ms = timeout_ms
        self.max_in_flight = max_in_flight
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._ids = itertools.count()
        self._lock = threading.Lock()

    def _next_id(self):
        with self._lock:
            return f"req-{next(self._ids)}"

    def _post_once(self, payload):
        data = json.dumps(payload).encode()
        req = urllib.request.Request(self.url, data=data, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_ms / 1000.0) as resp:
                body = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise JudgeTransportError(f"judge returned HTTP {exc.code}") from exc
            raise JudgeProtocolError(f"judge rejected request with HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise JudgeTransportError(f"judge unreachable: {exc}") from exc
        try:
            out = json.loads(body)
        except ValueError as exc:
            raise JudgeProtocolError("judge response is not JSON") from exc
        if not isinstance(out, dict):
            raise JudgeProtocolError("judge response is not a JSON object")
        if "id" in out and out["id"] != payload["id"]:
            raise JudgeProtocolError(f"response id {out['id']!r} does not match request {payload['id']!r}")
        return out

    def _post(self, payload):
        payload = {**payload, "id": self._next_id()}
        for attempt in range(self.max_attempts):
            try:
                return self._post_once(payload)
            except JudgeTransportError:
                if attempt == self.max_attempts - 1:
                    raise
                time.sleep(self.backoff_s * 2 ** attempt)

    def rubric(self, gt, pred, image=None):
        payload = {"task": "rubric", "gt": gt, "pred": pred}
        if image is not None:
            payload["image"] = image
        out = self._post(payload)
        score = out.get("score")
        if isinstance(score, bool) or not isinstance(score, int) or not 0 <= score <= 5:
            raise JudgeProtocolError(f"invalid rubric score {score!r}")
        return score

    def triplet(self, rec, reference):
        out = self._post({"task": "triplet", "gt": reference.to_json(), "pred": rec.to_json()})
        answers = out.get("answers")
        if not isinstance(answers, list) or len(answers) != 3 or not all(isinstance(a, bool) for a in answers):
            raise JudgeProtocolError(f"invalid triplet answers {answers!r}")
        return tuple(answers)

    def _fan_out(self, fn, pairs):
        # map keeps input order whatever order the responses arrive in
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(lambda p: fn(*p), pairs))

    def rubric_many(self, pairs):
        return self._fan_out(self.rubric, pairs)

    def triplet_many(self, pairs):
        return self._fan_out(self.triplet, pairs)


def make_judge(kind="mock", **kwargs):
    if kind == "mock":
        return MockJudge(**kwargs)
    if kind == "http":
        return HttpJudge(**kwargs)
    raise ValidationError(f"unknown judge kind {kind!r}", field="judge")
