"""Command-line entry point: ``drivecoc <subcommand> [--config c.json] [--in f.jsonl] [--out f]``.

Exit codes: 0 success, 2 invalid input or config, 3 judge endpoint failure,
1 anything else. Every error is reported as one JSON line on stderr.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import io
from ._validation import ValidationError
from .codec import dequantize, quantize
from .coc import (
    CocRecord,
    JudgeProtocolError,
    JudgeTransportError,
    compose_trace,
    make_judge,
    parse_intent,
    validate_record,
)
from .config import RunConfig
from .dynamics import ControlSequence, EgoState, Trajectory, fit_controls, integrate_controls
from .episode import Episode
from .flow import FlowMatchingExpert, SamplingError
from .geometry import OrientedBox
from .grpo import RolloutGroup, curation_scores, run_grpo_demo, run_sft, select_for_training
from .meta_actions import (
    detect_meta_actions,
    select_keyframe,
    tag_proactive_scenarios,
    tag_reactive_scenarios,
    transition_frames,
)
from .metrics import alpasim_scores, comfort_fraction, ade, min_ade, run_episode_metrics, token_budget
from .rewards import total_reward


def _map(fn, items, jobs):
    """Apply ``fn`` per record; results keep input order whatever the scheduling."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i, x) for i, x in enumerate(items)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda p: fn(*p), enumerate(items)))


def _record_rng(seed, index):
    return np.random.default_rng([seed, index])


def _strip(rec, *keys):
    return {k: v for k, v in rec.items() if k not in ("v", *keys)}


def _controls_from(rec):
    return ControlSequence(np.asarray(rec["controls"], dtype=float), dt=rec.get("dt", 0.1))


def _traj_from(rec):
    return Trajectory.from_dict(_strip(rec))


def _agents_from(frames):
    return [[OrientedBox.from_dict(b) for b in frame] for frame in frames]


def cmd_integrate(args, cfg):
    def run(i, rec):
        init = rec.get("initial", {})
        state = EgoState(init.get("x", 0.0), init.get("y", 0.0), init.get("theta", 0.0), init.get("v", 0.0))
        traj = integrate_controls(state, _controls_from(rec), cfg.fit)
        return io.versioned(traj.to_dict())
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_fit(args, cfg):
    def run(i, rec):
        return io.versioned(fit_controls(_traj_from(rec), cfg.fit).to_dict())
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_tokenize(args, cfg):
    spec = cfg.quantizer

    def run(i, rec):
        if args.inverse:
            return io.versioned(dequantize(np.asarray(rec["tokens"]), spec).to_dict())
        return io.versioned(quantize(_controls_from(rec), spec).to_dict())
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_detect_meta(args, cfg):
    def run(i, rec):
        traj = _traj_from(rec)
        return io.versioned(detect_meta_actions(traj, fit_controls(traj, cfg.fit), cfg.detector).to_dict())
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_keyframes(args, cfg):
    det = cfg.detector

    def run(i, rec):
        traj = _traj_from(rec)
        profile = detect_meta_actions(traj, fit_controls(traj, cfg.fit), det)
        trans = transition_frames(profile)
        keys = [select_keyframe(t, det.history_frames, det.buffer_s)._asdict() for t in trans]
        return io.versioned({"transitions": trans, "keyframes": keys})
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_tag_scenarios(args, cfg):
    def run(i, rec):
        ep = Episode.from_dict(_strip(rec, "policy"))
        return io.versioned({
            "id": ep.id,
            "reactive": [t.to_dict() for t in tag_reactive_scenarios(ep, cfg.detector)],
            "proactive": [r.to_dict() for r in tag_proactive_scenarios(ep, cfg.detector)],
        })
    return _map(run, io.read_jsonl(args.input), args.jobs)


def cmd_compose_coc(args, cfg):
    def run(i, rec):
        record = CocRecord.from_dict(rec)
        trace = compose_trace(record.decision, record.components, _record_rng(cfg.seed, i))
        out = CocRecord(record.decision, record.components, trace, record.keyframe, record.scenario, record.image)
        return out.to_dict()
    return _map(run, io.read_jsonl(args.input), args.jobs)


def _judge(args, cfg):
    kind = args.judge or cfg.judge.kind
    if kind == "http":
        return make_judge("http", max_in_flight=cfg.judge.max_in_flight,
                          max_attempts=cfg.judge.max_attempts, backoff_s=cfg.judge.backoff_s)
    return make_judge(kind)


def cmd_validate_coc(args, cfg):
    records = io.read_jsonl(args.input)
    parsed = []
    for rec in records:
        if "record" in rec:
            ref = rec.get("reference")
            parsed.append((CocRecord.from_dict(rec["record"]), CocRecord.from_dict(ref) if ref else None))
        else:
            parsed.append((CocRecord.from_dict(rec), None))
    pairs = [(r, ref) for r, ref in parsed if ref is not None]
    triplets = iter(_judge(args, cfg).triplet_many(pairs) if pairs else [])
    out = []
    for record, ref in parsed:
        row = {
            "violations": [v.value for v in validate_record(record)],
            "intent": parse_intent(record.trace).to_dict(),
        }
        if ref is not None:
            row["triplet"] = list(next(triplets))
        out.append(io.versioned(row))
    return out


def cmd_reward(args, cfg):
    records = io.read_jsonl(args.input)
    judge = _judge(args, cfg)

    def run(i, rec):
        rollout = {"trace": rec["rollout"]["trace"], "trajectory": Trajectory.from_dict(rec["rollout"]["trajectory"])}
        gt = rec["gt"]
        truth = {"trace": gt["trace"], "trajectory": Trajectory.from_dict(gt["trajectory"])}
        if "agents" in gt:
            truth["agents"] = _agents_from(gt["agents"])
        b = total_reward(rollout, truth, cfg.rewards, judge, cfg.detector, cfg.consistency)
        return io.versioned(b.to_dict())
    # judge calls fan out up to the judge's own in-flight limit
    jobs = max(args.jobs, cfg.judge.max_in_flight if (args.judge or cfg.judge.kind) == "http" else 1)
    return _map(run, records, jobs)


def _expert(cfg):
    f, s = cfg.flow, cfg.schedule
    return FlowMatchingExpert(
        hidden_width=f.hidden_width, time_dim=f.time_dim, n_steps=f.n_steps, batch_size=f.batch_size,
        learning_rate=f.learning_rate, schedule_alpha=s.alpha, schedule_beta=s.beta,
        schedule_shift=s.shift, delta_t=f.delta_t, control_scale=f.control_scale, random_state=cfg.seed,
    )


def cmd_train_fm(args, cfg):
    if not args.checkpoint:
        raise ValidationError("train-fm needs --checkpoint", field="checkpoint")
    records = io.read_jsonl(args.input)
    Y = np.vstack([_controls_from(r).to_row() for r in records])
    has_ctx = ["context" in r for r in records]
    if any(has_ctx) and not all(has_ctx):
        raise ValidationError("either every record has a context or none does", field="context")
    X = np.asarray([r["context"] for r in records], dtype=float) if all(has_ctx) else None
    est = _expert(cfg).fit(X, Y)
    est.save(args.checkpoint)
    tail = est.loss_curve_[-min(100, len(est.loss_curve_)):]
    return [io.versioned({
        "n_samples": len(Y),
        "context_dim": int(est.n_features_in_),
        "n_steps": int(est.n_steps),
        "final_loss": float(np.mean(tail)),
    })]


def cmd_sample_fm(args, cfg):
    if not args.checkpoint:
        raise ValidationError("sample-fm needs --checkpoint", field="checkpoint")
    est = FlowMatchingExpert.load(args.checkpoint)
    if args.input:
        X = np.asarray([r["context"] for r in io.read_jsonl(args.input)], dtype=float)
        rows = est.sample(X, random_state=cfg.seed)
    else:
        rows = est.sample(None, n_samples=args.n, random_state=cfg.seed)
    return [io.versioned(ControlSequence.from_row(r).to_dict()) for r in rows]


def cmd_sft_toy(args, cfg):
    _, _, curve = run_sft(cfg.grpo, np.random.default_rng(cfg.seed))
    return [io.versioned({"loss_curve": curve, "initial_loss": curve[0], "final_loss": curve[-1]})]


def cmd_grpo_demo(args, cfg):
    seeds = [cfg.seed + k for k in range(args.n_seeds)]
    runs = _map(lambda i, s: run_grpo_demo(cfg.grpo, s), seeds, args.jobs)
    initial = float(np.mean([r["expected_reward_initial"] for r in runs]))
    final = float(np.mean([r["expected_reward_final"] for r in runs]))
    return [io.versioned({
        "iterations": cfg.grpo.iterations,
        "seeds": seeds,
        "mean_reward_curve": np.mean([r["mean_reward_curve"] for r in runs], axis=0).tolist(),
        "final_consistency_rate": float(np.mean([r["final_consistency_rate"] for r in runs])),
        "expected_reward_initial": initial,
        "expected_reward_final": final,
        "improvement": final / initial - 1.0,
        "runs": [{k: r[k] for k in ("seed", "expected_reward_initial", "expected_reward_final",
                                     "final_consistency_rate")} for r in runs],
    })]


def cmd_curate(args, cfg):
    groups = [RolloutGroup.from_dict(_strip(r)) for r in io.read_jsonl(args.input)]
    scores = curation_scores(groups, cfg.curation.beta)
    selected = select_for_training(scores, cfg.curation.fraction, np.random.default_rng(cfg.seed))
    return [io.versioned({
        "scores": scores.tolist(),
        "ranking": np.argsort(-scores, kind="stable").tolist(),
        "selected": selected.tolist(),
    })]


def cmd_eval_open_loop(args, cfg):
    records = io.read_jsonl(args.input)

    def run(i, rec):
        gt = Trajectory.from_dict(rec["gt"])
        cands = [Trajectory.from_dict(c) for c in rec["candidates"]]
        if not cands:
            raise ValidationError("empty candidate list", field="candidates", line=i + 1)
        return {
            "ade": ade(cands[0], gt),
            "min_ade_3s": min_ade(cands, gt, 3),
            "min_ade_6s": min_ade(cands, gt, 6),
            "candidates": cands,
        }
    rows = _map(run, records, args.jobs)
    comfort = comfort_fraction([c for r in rows for c in r["candidates"]], cfg.metrics.a_comfort, cfg.fit)
    per = [{k: r[k] for k in ("ade", "min_ade_3s", "min_ade_6s")} for r in rows]
    return [io.versioned({
        "per_sample": per,
        "ade": float(np.mean([p["ade"] for p in per])),
        "min_ade_3s": float(np.mean([p["min_ade_3s"] for p in per])),
        "min_ade_6s": float(np.mean([p["min_ade_6s"] for p in per])),
        "comfort_fraction": comfort,
    })]


def cmd_eval_closed_loop(args, cfg):
    def run(i, rec):
        ep = Episode.from_dict(_strip(rec, "policy"))
        policy = Trajectory.from_dict(rec["policy"]) if "policy" in rec else ep.ego
        return run_episode_metrics(ep, policy, cfg.closed_loop)
    logs = _map(run, io.read_jsonl(args.input), args.jobs)
    return [io.versioned({**alpasim_scores(logs), "episodes": [log.to_dict() for log in logs]})]


def cmd_token_budget(args, cfg):
    params = {k: getattr(args, k) for k in ("width", "height", "sx", "sy", "sz", "p", "px", "py", "pz",
                                            "num_queries") if getattr(args, k) is not None}
    out = token_budget(args.mode, cameras=args.cameras, **params)
    report = io.versioned({"mode": args.mode, "cameras": args.cameras, **out})
    if args.out is None and not args.json:
        # plain total for shell use; --json or --out gives the full report
        return [str(out["total"])], True
    return [report]


COMMANDS = {
    "integrate": (cmd_integrate, "integrate control sequences into trajectories"),
    "fit": (cmd_fit, "fit controls to trajectories"),
    "tokenize": (cmd_tokenize, "quantize controls into 128 tokens (or --inverse)"),
    "detect-meta": (cmd_detect_meta, "per-frame meta-action labels"),
    "keyframes": (cmd_keyframes, "meta-action transitions and keyframes"),
    "tag-scenarios": (cmd_tag_scenarios, "reactive and proactive scenario tags for episodes"),
    "compose-coc": (cmd_compose_coc, "render reasoning traces for CoC records"),
    "validate-coc": (cmd_validate_coc, "check CoC records and optionally judge them"),
    "reward": (cmd_reward, "reward breakdown per rollout"),
    "train-fm": (cmd_train_fm, "train the flow-matching action expert"),
    "sample-fm": (cmd_sample_fm, "sample controls from a flow-matching checkpoint"),
    "sft-toy": (cmd_sft_toy, "supervised fit of the toy token policy"),
    "grpo-demo": (cmd_grpo_demo, "GRPO on a verifiable-reward token task"),
    "curate": (cmd_curate, "rank rollout groups by reward/model disagreement"),
    "eval-open-loop": (cmd_eval_open_loop, "ADE, minADE and comfort"),
    "eval-closed-loop": (cmd_eval_closed_loop, "offroad / close-encounter events and scores"),
    "token-budget": (cmd_token_budget, "vision token counts"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="drivecoc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--jobs", type=int, default=1, help="records processed concurrently")
        p.add_argument("--in", dest="input", help="input JSON-Lines file ('-' for stdin)")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--judge", choices=("mock", "http"), help="overrides the config judge kind")
        if name == "tokenize":
            p.add_argument("--inverse", action="store_true", help="decode tokens back to controls")
        if name in ("train-fm", "sample-fm"):
            p.add_argument("--checkpoint", help="checkpoint path prefix (.bin + .json)")
        if name == "sample-fm":
            p.add_argument("--n", type=int, default=1, help="samples when no contexts are given")
        if name == "grpo-demo":
            p.add_argument("--n-seeds", type=int, default=5)
        if name == "token-budget":
            p.add_argument("--mode", choices=("single", "triplane", "flex"), required=True)
            p.add_argument("--cameras", type=int, default=1)
            p.add_argument("--json", action="store_true", help="print the full JSON report")
            for flag in ("width", "height", "sx", "sy", "sz", "p", "px", "py", "pz"):
                p.add_argument(f"--{flag}", type=int)
            p.add_argument("--num-queries", type=int)
    return parser


def _error(code, message, context=None, status=1):
    line = {"error": {"code": code, "message": message, "context": context or {}}}
    sys.stderr.write(json.dumps(line, sort_keys=True, default=str) + "\n")
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be >= 1", field="jobs")
        cfg = RunConfig.load(args.config).with_seed(args.seed)
        if args.input is None and cfg.paths.input is not None:
            args.input = cfg.paths.input
        if args.out is None and cfg.paths.output is not None:
            args.out = cfg.paths.output
        result = COMMANDS[args.command][0](args, cfg)
        if isinstance(result, tuple):
            io.write_lines(result[0], args.out)
        else:
            io.write_jsonl(result, args.out)
    except ValidationError as exc:
        return _error("validation", str(exc), exc.context, 2)
    except (KeyError, TypeError, ValueError) as exc:
        # sklearn and numpy report bad shapes and values as ValueError
        return _error("validation", f"malformed input record: {exc!r}", {}, 2)
    except JudgeTransportError as exc:
        return _error("transport", str(exc), {}, 3)
    except JudgeProtocolError as exc:
        return _error("protocol", str(exc), {}, 3)
    except SamplingError as exc:
        return _error("sampling", str(exc), {"step": exc.step}, 1)
    except Exception as exc:  # noqa: BLE001 - last-resort machine-readable report
        return _error("internal", f"{type(exc).__name__}: {exc}", {}, 1)
    return 0


def config_defaults():
    """The default configuration as a JSON-ready dict."""
    return asdict(RunConfig())


if __name__ == "__main__":
    sys.exit(main())
