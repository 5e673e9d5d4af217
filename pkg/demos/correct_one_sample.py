"""Walk one synthetic utterance through the correction loop.

    python3 demos/correct_one_sample.py [seed]

Prints the injected issue, what the evaluator reports at each pass, the mask
handed to the editor, and the final transcript.
"""
import sys

from ttsfix.alignment import dtw_align
from ttsfix.core import TextSequence
from ttsfix.correction import CorrectionConfig, correct
from ttsfix.sim import SimConfig, SimEditor, SimEvaluator, simulate_tts, track_truth


def fmt(scope) -> str:
    return "[" + ", ".join(f"[{a:.2f}, {b:.2f})" for a, b in scope.to_pairs()) + "]"


def main(seed: int = 3) -> None:
    target = TextSequence.from_text("The birch canoe slid on the smooth planks.")
    cfg = SimConfig(seed=seed, p_common=0.3, p_repeated=0.3, p_abnormal=0.3, editor_p_fix=0.7)
    # first sample id with an injected issue
    sid = next(k for k in range(100) if simulate_tts(target, cfg, k)[1].issue_type.value != "Clean")
    track, injection = simulate_tts(target, cfg, sid)
    print(f"target      : {target}")
    print(f"issue       : {injection.issue_type.value} at {fmt(injection.truth_scope)}")
    print(f"spoken      : {injection.truth_transcript}")

    _, ops = dtw_align(target, injection.truth_transcript)
    for op in ops.mismatches:
        print(f"  {op.kind.value:10s} ref={op.ref} hyp={op.hyp} cost={op.cost:.2f}")

    outcome = correct(track, target, SimEvaluator(cfg, sid), SimEditor(cfg, sid), CorrectionConfig(max_iter=3))
    for k, snap in enumerate(outcome.per_iteration):
        line = f"pass {k}: wer={snap.wer:.3f} quality={snap.quality:.2f} scope={fmt(snap.scope)}"
        if k < len(outcome.masks):
            line += f" -> mask {fmt(outcome.masks[k])}"
        print(line)
    spoken, remaining = track_truth(outcome.final_track, target)
    print(f"final       : {spoken} (corrected={outcome.corrected}, residual scope={fmt(remaining)})")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
