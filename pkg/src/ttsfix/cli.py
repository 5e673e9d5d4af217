"""Command-line entry point.

Exit codes: 0 success, 2 usage / config / parse error, 3 data-consistency
error.  Structured output is line-delimited JSON; curves and statistics are
CSV.  Every command embeds its resolved configuration and a hash of it.
"""
from __future__ import annotations

import argparse
import atexit
import json
import logging
import math
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as run_config
from .adapters import ProcessBackend, ProcessEditor, ProcessEvaluator
from .alignment import DEFAULT_COST, UNIT_COST, dtw_align
from .core import TextSequence
from .correction import correct
from .dataset import FgesManifest, FgesSample, load_manifest, save_manifest, stats, stats_csv
from .errors import DegenerateInput, EmptyMask, LengthMismatch, ProviderMismatch, TtsfixError, UnmatchedId
from .losses import dpo_loss, masked_dpo_loss
from .metrics import (MetricReport, corpus_wer, failure_rate, mean_iou, mse_clean, system_level_srcc,
                      utt_pcc)
from .preference import PreferencePair, pair_to_dpo_inputs, scope_to_frame_mask
from .records import config_hash, dumps, load_track, save_track, scope_from_json, scope_to_json
from .sim import NoisedResiduals, SimEditor, SimEvaluator, quality_proxy, simulate_tts

log = logging.getLogger("ttsfix")


class UsageError(Exception):
    """Maps to exit code 2."""


class DataError(Exception):
    """Maps to exit code 3."""


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _read_jsonl(path: str) -> list[dict]:
    out = []
    for lineno, line in enumerate(_read_text(path).splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise UsageError(f"{path}:{lineno}: record is not an object")
        out.append(rec)
    return out


def _load_manifest(path: str) -> FgesManifest:
    if not Path(path).is_file():
        raise UsageError(f"cannot read {path}: no such file")
    return load_manifest(path)


def _emit(obj) -> None:
    sys.stdout.write(dumps(obj) + "\n")


def _config(args, overrides: dict) -> dict:
    try:
        return run_config.resolve(getattr(args, "config", None), overrides)
    except run_config.ConfigError as exc:
        raise UsageError(str(exc)) from None


def _echo(cfg: dict, **extra) -> dict:
    # worker count never changes results, so it stays out of the echoed config
    out = {k: v for k, v in cfg.items() if k != "workers"}
    out.update(extra)
    return out


# ---------------------------------------------------------------------------

def cmd_align(args) -> int:
    ref = TextSequence.from_text(_read_text(args.ref))
    hyp = TextSequence.from_text(_read_text(args.hyp))
    cfg = {"cost": args.cost}
    path, ops = dtw_align(ref, hyp, UNIT_COST if args.cost == "unit" else DEFAULT_COST)
    _emit({
        "config": cfg, "config_hash": config_hash(cfg),
        "total_cost": path.total_cost,
        "path": [list(step) for step in path.steps],
        "ops": [{"op": op.kind.value, "ref": op.ref, "hyp": op.hyp, "cost": op.cost} for op in ops.ops],
    })
    return 0


def _simulate_one(task):
    index, target_text, cfg = task
    sim = run_config.sim_config(cfg)
    target = TextSequence.from_text(target_text)
    track, inj = simulate_tts(target, sim, index)
    sid = f"s{index:06d}"
    sample = FgesSample(sid, target, f"tracks/{sid}.json", inj.truth_scope, quality_proxy(track, inj.truth_scope, sim),
                        inj.issue_type, inj.truth_transcript, track.duration)
    return sample, track


def _pool_map(fn, tasks, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [fn(t) for t in tasks]


def cmd_simulate(args) -> int:
    if args.n is not None and args.n < 1:
        raise UsageError("--n must be >= 1")
    cfg = _config(args, {"seed": args.seed, "workers": args.workers})
    n = args.n if args.n is not None else 100
    targets = []
    for line in _read_text(args.targets).splitlines():
        if not line.strip():
            continue
        if TextSequence.from_text(line).word_count < 3:
            log.warning("skipping target with fewer than 3 words: %r", line)
            continue
        targets.append(line.strip())
    if not targets:
        raise UsageError(f"{args.targets} has no usable target lines")
    results = _pool_map(_simulate_one, [(i, targets[i % len(targets)], cfg) for i in range(n)], cfg["workers"])
    out = Path(args.out)
    for sample, track in results:
        save_track(track, out / sample.track_path)
    save_manifest(FgesManifest(tuple(s for s, _ in results)), out / "manifest.jsonl")
    resolved = _echo(cfg, n=n, targets=args.targets)
    (out / "config.json").write_text(dumps({"config": resolved, "config_hash": config_hash(resolved)}) + "\n",
                                     encoding="utf-8")
    return 0


_BACKENDS: dict[tuple[str, float], ProcessBackend] = {}


def _backend(cmd: str, timeout: float) -> ProcessBackend:
    """One long-lived child per command and worker process."""
    key = (cmd, timeout)
    if key not in _BACKENDS:
        _BACKENDS[key] = ProcessBackend(shlex.split(cmd), timeout)
    return _BACKENDS[key]


@atexit.register
def _close_backends():
    for b in _BACKENDS.values():
        b.close()
    _BACKENDS.clear()


def _correct_one(task):
    index, record, track_path, cfg, evaluator_cmd, editor_cmd = task
    sample = FgesSample.from_record(record)
    sim = run_config.sim_config(cfg)
    corr = run_config.correction_config(cfg)
    track = load_track(track_path)
    timeout = cfg["adapter_timeout_s"]
    evaluator = (ProcessEvaluator(_backend(evaluator_cmd, timeout), index) if evaluator_cmd
                 else SimEvaluator(sim, index))
    editor = ProcessEditor(_backend(editor_cmd, timeout), index) if editor_cmd else SimEditor(sim, index)
    outcome = correct(track, sample.target_text, evaluator, editor, corr)
    snaps = outcome.per_iteration
    fails = [not snaps[min(k, len(snaps) - 1)].passes(corr) for k in range(corr.max_iter + 1)] if snaps else []
    wq = [[snaps[min(k, len(snaps) - 1)].wer, snaps[min(k, len(snaps) - 1)].quality]
          for k in range(corr.max_iter + 1)] if snaps else []
    rec = {
        "id": sample.id,
        "iterations_used": outcome.iterations_used,
        "corrected": outcome.corrected,
        "error": outcome.error,
        "per_iteration": [{"wer": s.wer, "quality": s.quality, "scope": scope_to_json(s.scope),
                           "has_discrepancies": s.has_discrepancies} for s in snaps],
        "masks": [scope_to_json(m) for m in outcome.masks],
    }
    return rec, outcome.final_track, fails, wq


def cmd_correct(args) -> int:
    if args.max_iter is not None and args.max_iter < 1:
        raise UsageError("--max-iter must be >= 1")
    cfg = _config(args, {"correction.max_iter": args.max_iter, "workers": args.workers,
                        "adapter_timeout_s": args.adapter_timeout})
    manifest = _load_manifest(args.manifest)
    root = Path(args.manifest).parent
    tasks = [(i, s.to_record(), str(root / s.track_path), cfg, args.evaluator_cmd, args.editor_cmd)
             for i, s in enumerate(manifest.samples)]
    results = _pool_map(_correct_one, tasks, cfg["workers"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    curves, wq_curves = [], []
    for (rec, track, fails, wq), sample in zip(results, manifest.samples):
        if rec["error"]:
            log.warning("sample %s: %s", sample.id, rec["error"])
        save_track(track, out / "tracks" / f"{sample.id}.json")
        lines.append(dumps(rec))
        if fails:
            curves.append(fails)
            wq_curves.append(wq)
    (out / "outcomes.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    corr = run_config.correction_config(cfg)
    steps = corr.max_iter + 1
    n = len(curves)
    curve = [sum(c[k] for c in curves) / n for k in range(steps)] if n else []
    wq_curve = [failure_rate([c[k] for c in wq_curves], corr.wer_gate, corr.quality_gate)
                for k in range(steps)] if n else []
    resolved = _echo(cfg, manifest=args.manifest)
    summary = {
        "config": resolved, "config_hash": config_hash(resolved),
        "n_samples": len(manifest), "n_errors": sum(1 for r, *_ in results if r["error"]),
        "pre_wer": math.fsum(c[0][0] for c in wq_curves) / n if n else None,
        "post_wer": math.fsum(c[-1][0] for c in wq_curves) / n if n else None,
        "failure_rate_pre": curve[0] if curve else None,
        "failure_rate_post": curve[-1] if curve else None,
        "curve": curve, "wer_quality_curve": wq_curve,
    }
    (out / "summary.json").write_text(dumps(summary) + "\n", encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.manifest)
    preds = {}
    for rec in _read_jsonl(args.pred):
        if "id" not in rec:
            raise UsageError(f"{args.pred}: prediction without id")
        preds[str(rec["id"])] = rec
    if not preds:
        raise DataError("prediction file is empty")
    ids = {s.id for s in manifest.samples}
    unmatched = sorted(set(preds) ^ ids)
    if unmatched:
        raise DataError(f"unmatched ids: {', '.join(unmatched)}")
    root = Path(args.manifest).parent
    wer_pairs, iou_pairs, clean_probs = [], [], []
    q_pred, q_true, systems = [], [], []
    for s in manifest.samples:
        p = preds[s.id]
        try:
            transcript = TextSequence.from_text(p["transcript"])
            scope = scope_from_json(p["scope"])
            quality = float(p["quality"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"prediction {s.id}: {exc}") from None
        wer_pairs.append((s.transcript, transcript))
        if s.error_scope:
            iou_pairs.append((scope, s.error_scope))
        else:
            if "frame_probs" in p:
                clean_probs.append(p["frame_probs"])
            else:
                track = load_track(root / s.track_path)
                clean_probs.append(scope_to_frame_mask(scope, track.n_frames, track.hop_s).astype(float))
        q_pred.append(quality)
        q_true.append(s.quality.value)
        systems.append(p.get("system"))

    def guarded(fn, *a):
        try:
            return fn(*a)
        except (DegenerateInput, ValueError):
            return None

    sys_srcc = None
    if all(x is not None for x in systems) and len(set(systems)) >= 2:
        sys_srcc = guarded(system_level_srcc, q_pred, q_true, systems)
    report = MetricReport(
        wer=corpus_wer(wer_pairs),
        iou=mean_iou(iou_pairs, pooled=args.pooled_iou) if iou_pairs else None,
        mse_clean=mse_clean(clean_probs) if clean_probs else None,
        utt_pcc=guarded(utt_pcc, q_pred, q_true),
        sys_srcc=sys_srcc,
    )
    cfg = {"pooled_iou": args.pooled_iou}
    _emit({"config": cfg, "config_hash": config_hash(cfg), "n_samples": len(manifest),
           "n_erroneous": len(iou_pairs), "n_clean": len(manifest) - len(iou_pairs), "report": report.to_dict()})
    return 0


def cmd_dpo(args) -> int:
    pairs = []
    for rec in _read_jsonl(args.pairs):
        try:
            pairs.append(PreferencePair.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.pairs}: bad pair record: {exc}") from None
    residuals = {}
    for rec in _read_jsonl(args.residuals):
        try:
            residuals[str(rec["sample_id"])] = NoisedResiduals(
                rec["eps"], rec["pred_theta"], rec["pred_ref"], int(rec["timestep"]), int(rec["horizon"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.residuals}: bad residual record: {exc}") from None

    def provider(sample_id):
        if sample_id not in residuals:
            raise DataError(f"no residuals for sample {sample_id!r}")
        return residuals[sample_id]

    cfg = {"beta": args.beta, "masked": args.masked, "hop_s": args.hop_s}
    losses = []
    for pair in pairs:
        try:
            inputs = pair_to_dpo_inputs(pair, provider, args.beta, args.hop_s)
        except (ProviderMismatch, LengthMismatch) as exc:
            raise UsageError(f"pair {pair.winner_id}/{pair.loser_id}: {exc}") from None
        fallback = False
        if args.masked:
            try:
                loss = masked_dpo_loss(inputs)
            except EmptyMask:
                loss, fallback = dpo_loss(inputs), True
        else:
            loss = dpo_loss(inputs)
        losses.append(loss)
        _emit({"prompt_id": pair.prompt_id, "winner_id": pair.winner_id, "loser_id": pair.loser_id,
               "loss": loss, "masked": args.masked and not fallback, "fallback": fallback})
    _emit({"config": cfg, "config_hash": config_hash(cfg), "n_pairs": len(losses),
           "mean_loss": math.fsum(losses) / len(losses) if losses else None})
    return 0


def cmd_curve(args) -> int:
    try:
        report = json.loads(_read_text(args.report))
        curve = [float(v) for v in report["curve"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.report}: cannot read curve ({exc})") from None
    text = "iteration,failure_rate\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(curve))
    Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_stats(args) -> int:
    text = stats_csv(stats(_load_manifest(args.manifest)))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttsfix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align two one-sentence text files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--cost", choices=("default", "unit"), default="default")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("simulate", help="generate a seeded erroneous-speech manifest")
    p.add_argument("--targets", required=True)
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correct", help="run the correction loop over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--evaluator-cmd", help="command serving the evaluator line protocol")
    p.add_argument("--editor-cmd", help="command serving the editor line protocol")
    p.add_argument("--adapter-timeout", type=float, help="seconds to wait for each adapter response")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("evaluate", help="score predictions against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--pooled-iou", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dpo", help="preference loss per pair")
    p.add_argument("--pairs", required=True)
    p.add_argument("--residuals", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--masked", action="store_true")
    p.add_argument("--hop-s", type=float, default=0.02)
    p.set_defaults(func=cmd_dpo)

    p = sub.add_parser("curve", help="failure-rate curve CSV from a correction summary")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("stats", help="per-issue statistics CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "beta", None) is not None and not args.beta > 0:
        parser.error("--beta must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ttsfix {args.command}: {exc}", file=sys.stderr)
        return 2
    except (DataError, UnmatchedId) as exc:
        print(f"ttsfix {args.command}: {exc}", file=sys.stderr)
        return 3
    except TtsfixError as exc:
        print(f"ttsfix {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
