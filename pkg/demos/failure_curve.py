"""Failure rate after each regeneration for a few editor reliabilities.

    python3 demos/failure_curve.py [n_samples]

With an exact evaluator and an editor that fixes a masked error with
probability p, the share of initially failing samples still failing after k
passes decays roughly like (1 - p) ** k.
"""
import sys
from importlib.resources import files

from ttsfix.core import TextSequence
from ttsfix.correction import CorrectionConfig
from ttsfix.sim import SimConfig, run_experiment


def main(n: int = 400) -> None:
    lines = files("ttsfix").joinpath("data/sentences.txt").read_text().splitlines()
    targets = [TextSequence.from_text(s) for s in lines if s.strip()]
    print("p_fix  initial  " + "  ".join(f"after {k}" for k in range(1, 4)) + "   (1-p)^k")
    for p_fix in (0.5, 0.8, 0.95):
        cfg = SimConfig(seed=1, p_common=0.1, p_repeated=0.1, p_punctuation=0.1, p_abnormal=0.1,
                        editor_p_fix=p_fix)
        res = run_experiment(n, targets, cfg, CorrectionConfig(max_iter=3))
        share = [r / res.initially_failing for r in res.residual_failing]
        decay = ", ".join(f"{(1 - p_fix) ** k:.3f}" for k in range(1, 4))
        print(f"{p_fix:5.2f}  {res.curve[0]:7.3f}  " + "  ".join(f"{s:7.3f}" for s in share[1:]) + f"   {decay}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 400)
