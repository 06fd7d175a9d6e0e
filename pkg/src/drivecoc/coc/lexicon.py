"""Trace composition from a compact verb set, and rule-based intent parsing.

Parsing only looks at the main clause of each sentence: causal clauses
("because ...", "since ...", "due to ...") describe the scene, and scene
descriptions such as "a vehicle is stopped ahead" must not be read as the
ego's own intent.
"""

import re

import numpy as np

from .._validation import ValidationError
from .schema import (
    ComponentCategory,
    LateralDecision,
    LateralIntent,
    LongitudinalDecision,
    LongitudinalIntent,
    ParsedIntent,
    Side,
)

CAUSAL_MARKERS = r"\b(?:because|since|due to|given that|owing to|as a result of)\b"
# "<cause>, so <effect>"
RESULT_MARKERS = r"\b(?:so(?!\s+that)|therefore|hence|thus)\b"
NEGATORS = frozenset({"not", "no", "never", "without", "don't", "dont", "avoid", "avoiding",
                      "cannot", "can't", "won't", "instead"})
NEGATION_WINDOW = 3
DIRECTION_WINDOW = 6
PUNCT = frozenset({",", "."})
CLAUSE_BREAKS = frozenset({"and", "then", "but", "while", "or"}) | PUNCT

L, D, S, M, R = (LongitudinalIntent.Accelerate, LongitudinalIntent.Decelerate, LongitudinalIntent.Stop,
                 LongitudinalIntent.MaintainSpeed, LongitudinalIntent.Reverse)

LONGITUDINAL_STEMS = {
    "come to a complete stop": S, "coming to a complete stop": S, "come to a stop": S,
    "coming to a stop": S, "remain stopped": S, "stay stopped": S, "standstill": S, "halt": S, "stop": S,
    "decelerat": D, "slow down": D, "slowing down": D, "slows down": D, "brake": D, "braking": D,
    "reduce speed": D, "reducing speed": D, "ease off": D, "easing off": D, "yield": D,
    "give way": D, "giving way": D,
    "accelerat": L, "speed up": L, "speeding up": L, "speeds up": L, "increase speed": L,
    "increasing speed": L, "pick up speed": L, "picking up speed": L, "gain speed": L, "gaining speed": L,
    "maintain speed": M, "maintaining speed": M, "maintain the current speed": M,
    "maintaining the current speed": M, "keep speed": M, "keeping speed": M, "keep the current speed": M,
    "hold speed": M, "holding speed": M, "cruis": M, "follow": M, "keep pace": M,
    "revers": R, "back up": R, "backing up": R, "back out": R,
}
# a stop anywhere in the main clause wins over the slowing that precedes it
LONGITUDINAL_PRECEDENCE = (S, R)

DIRECTIONAL_STEMS = (
    "change lane", "changing lane", "lane change", "merg", "nudg", "turn", "steer", "swerv", "veer",
    "shift", "move over", "moving over", "pull over", "pulling over", "bear",
)
CURB_STEMS = ("pull over", "pulling over")
STRAIGHT_STEMS = (
    "keep lane", "keeping lane", "keep the lane", "keep in lane", "stay in lane", "stay in the lane",
    "staying in the lane", "lane keeping", "lane centering", "go straight", "going straight",
    "continue straight", "continuing straight", "straight", "re-center", "recenter", "abort",
)

LONGITUDINAL_VERBS = {
    LongitudinalDecision.SetSpeedTracking: ("maintain speed", "maintaining speed"),
    LongitudinalDecision.LeadObstacleFollowing: ("follow the lead vehicle", "following the lead vehicle"),
    LongitudinalDecision.SpeedAdaptation: ("slow down", "slowing down"),
    LongitudinalDecision.GapSearching: ("slow down to find a gap", "slowing down to find a gap"),
    LongitudinalDecision.AccelerationForPassing: ("accelerate to pass", "accelerating to pass"),
    LongitudinalDecision.Yield: ("yield", "yielding"),
    LongitudinalDecision.StopForStaticConstraints: ("stop", "stopping"),
}
SPEED_DELTA_VERBS = {
    (LongitudinalDecision.SetSpeedTracking, 1): ("accelerate to the set speed", "accelerating to the set speed"),
    (LongitudinalDecision.SetSpeedTracking, -1): ("slow down to the set speed", "slowing down to the set speed"),
    (LongitudinalDecision.GapSearching, 1): ("speed up to find a gap", "speeding up to find a gap"),
    (LongitudinalDecision.GapSearching, 0): ("maintain speed to find a gap", "maintaining speed to find a gap"),
}
LATERAL_VERBS = {
    LateralDecision.LaneKeeping: ("keep lane", "keeping lane"),
    LateralDecision.MergeSplit: ("merge{to_side}", "merging{to_side}"),
    LateralDecision.OutOfLaneNudge: ("nudge {side} out of the lane", "nudging {side} out of the lane"),
    LateralDecision.InLaneNudge: ("nudge {side} within the lane", "nudging {side} within the lane"),
    LateralDecision.LaneChange: ("change lanes to the {side}", "changing lanes to the {side}"),
    LateralDecision.PullOver: ("pull over", "pulling over"),
    LateralDecision.Turn: ("turn {side}", "turning {side}"),
    LateralDecision.LateralManeuverAbort: ("abort the maneuver and re-center", "aborting the maneuver and re-centering"),
}

COMPONENT_TEMPLATES = {
    ComponentCategory.CriticalObject: ("{article} {type} is {motion} {pose}",
                                       {"type": "vehicle", "motion": "stopped", "pose": "ahead"}),
    ComponentCategory.TrafficLight: ("the traffic light is {state}", {"state": "red"}),
    ComponentCategory.YieldStopControl: ("there is a {sign} sign ahead", {"sign": "stop"}),
    ComponentCategory.RoadEvent: ("there is a {event} ahead", {"event": "curve"}),
    ComponentCategory.LaneMarking: ("the lane markings are {type}", {"type": "solid"}),
    ComponentCategory.RoutingIntent: ("the route requires {target}", {"target": "the next exit"}),
    ComponentCategory.OddConstraint: ("there is {condition} ahead", {"condition": "construction"}),
}

# nouns used to compare which causal factors two traces mention
COMPONENT_NOUNS = (
    "traffic light", "stop sign", "yield sign", "stop line", "speed bump", "lane markings",
    "emergency vehicle", "school bus", "bike lane", "lead vehicle", "construction",
    "pedestrian", "cyclist", "bicycle", "motorcyclist", "vehicle", "car", "truck", "bus", "van",
    "animal", "debris", "cone", "barrier", "crosswalk", "intersection", "roundabout", "ramp",
    "junction", "curve", "exit", "route", "shoulder", "fog", "rain", "snow", "visibility", "gap",
)


def _tokens(text):
    return re.findall(r"[a-z0-9']+(?:-[a-z0-9']+)*|[,.]", text.lower())


def split_clauses(text):
    """Split ``text`` into (main, causal) parts, sentence by sentence."""
    main, causal = [], []
    for sentence in re.split(r"[.;!?\n]+", text or ""):
        s = sentence.strip()
        if not s:
            continue
        lead = re.match(r"\s*" + CAUSAL_MARKERS, s, flags=re.I)
        if lead:
            head, sep, tail = s.partition(",")
            causal.append(head)
            if sep:
                main.append(tail)
            continue
        m = re.search(CAUSAL_MARKERS, s, flags=re.I)
        r = re.search(RESULT_MARKERS, s, flags=re.I)
        if r and not m:
            causal.append(s[:r.start()])
            main.append(s[r.end():])
        elif m:
            main.append(s[:m.start()])
            causal.append(s[m.start():])
        else:
            main.append(s)
    return " . ".join(main), " . ".join(causal)


def _find_stems(tokens, stems):
    """Longest-stem-first matches as (start, end, stem); matched tokens are consumed."""
    taken = [False] * len(tokens)
    hits = []
    for stem in sorted(stems, key=len, reverse=True):
        words = stem.split()
        n = len(words)
        for i in range(len(tokens) - n + 1):
            if any(taken[i:i + n]):
                continue
            if all(tokens[i + j] == w for j, w in enumerate(words[:-1])) and tokens[i + n - 1].startswith(words[-1]):
                hits.append((i, i + n, stem))
                for j in range(i, i + n):
                    taken[j] = True
    return sorted(hits)


def _negated(tokens, start):
    for tok in reversed(tokens[max(0, start - NEGATION_WINDOW):start]):
        if tok in PUNCT:
            return False
        if tok in NEGATORS:
            return True
    return False


def _direction(tokens, start, end):
    if start > 0 and tokens[start - 1] in ("left", "right"):
        return tokens[start - 1]
    for tok in tokens[end:end + DIRECTION_WINDOW]:
        if tok in CLAUSE_BREAKS:
            break
        if tok in ("left", "right"):
            return tok
    return None


def parse_intent(trace, curb_side=Side.Right):
    """Channel intents stated in ``trace``; Unknown where nothing in the lexicon matches."""
    main, _ = split_clauses(trace or "")
    tokens = _tokens(main)

    lon = LongitudinalIntent.Unknown
    found = [
        LONGITUDINAL_STEMS[stem]
        for start, _, stem in _find_stems(tokens, LONGITUDINAL_STEMS)
        if not _negated(tokens, start)
    ]
    if found:
        lon = next((p for p in LONGITUDINAL_PRECEDENCE if p in found), found[0])

    lat = LateralIntent.Unknown
    for start, end, stem in _find_stems(tokens, DIRECTIONAL_STEMS + STRAIGHT_STEMS):
        if _negated(tokens, start):
            continue
        if stem in STRAIGHT_STEMS:
            lat = LateralIntent.Straight
            break
        side = _direction(tokens, start, end)
        if side is None and stem in CURB_STEMS:
            side = Side(curb_side).value.lower()
        if side is not None:
            lat = LateralIntent.Left if side == "left" else LateralIntent.Right
            break
    return ParsedIntent(lon, lat)


def component_phrase(component):
    template, defaults = COMPONENT_TEMPLATES[component.category]
    values = {**defaults, **component.attributes}
    kind = values.get("type", "")
    values["article"] = "an" if kind[:1] in "aeiou" and kind else "a"
    return template.format(**values)


def mentioned_components(trace):
    """Set of component nouns named in the causal part of ``trace`` (or all of it)."""
    _, causal = split_clauses(trace or "")
    text = " ".join(_tokens(causal or trace or ""))
    return {noun for noun, _ in _noun_hits(text)}


def _noun_hits(text):
    hits = []
    for noun in sorted(COMPONENT_NOUNS, key=len, reverse=True):
        pattern = r"\b" + re.escape(noun) + r"s?\b"
        for m in re.finditer(pattern, text):
            hits.append((noun, m.span()))
        text = re.sub(pattern, " ", text)
    return hits


def _verb_phrases(decision):
    parts = []
    if decision.longitudinal is not None:
        forms = LONGITUDINAL_VERBS[decision.longitudinal]
        if decision.speed_delta is not None:
            key = (decision.longitudinal, int(np.sign(decision.speed_delta)))
            forms = SPEED_DELTA_VERBS.get(key, forms)
        parts.append(forms)
    if decision.lateral is not None:
        side = decision.side.value.lower() if decision.side else ""
        to_side = f" to the {side}" if side else ""
        imp, ger = LATERAL_VERBS[decision.lateral]
        parts.append((imp.format(side=side, to_side=to_side), ger.format(side=side, to_side=to_side)))
    imperative = " and ".join(p[0] for p in parts)
    gerund = " and ".join(p[1] for p in parts)
    return imperative, gerund


def _join(phrases):
    if len(phrases) <= 1:
        return "".join(phrases)
    return ", ".join(phrases[:-1]) + " and " + phrases[-1]


TEMPLATE_FAMILIES = ("A", "B", "C")


def compose_trace(decision, components=(), rng=None, family=None):
    """Render a reasoning trace; the template family is drawn from ``rng`` unless given."""
    components = list(components)
    if decision.is_none:
        if components:
            raise ValidationError("components given without a driving decision", field="components")
        return ""
    if family is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        family = TEMPLATE_FAMILIES[int(rng.integers(len(TEMPLATE_FAMILIES)))]
    if family not in TEMPLATE_FAMILIES:
        raise ValidationError(f"unknown template family {family!r}", field="family")
    imperative, gerund = _verb_phrases(decision)
    phrases = [component_phrase(c) for c in components]
    # a leading causal clause ends at its first comma, so it must not contain one
    causes = " and ".join(phrases) if family == "C" else _join(phrases)
    if family == "A":
        return f"{gerund} because {causes}" if causes else gerund
    if family == "B":
        text = f"{imperative} since {causes}" if causes else imperative
        return text[0].upper() + text[1:] + "."
    if causes:
        return f"Because {causes}, {imperative}."
    return imperative[0].upper() + imperative[1:] + "."
