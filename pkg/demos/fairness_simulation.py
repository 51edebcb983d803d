"""A job-seeker simulation with a feedback loop.

A classifier predicts who is likely to find work. Agents it flags as low
prospects receive training that raises their skills, and the classifier is
refit every round on the new labels. Comparing a model that sees the
protected attribute with one that does not shows what each trades: the
biased model narrows the gap in true outcomes but misses more qualified
protected agents along the way.
"""

import numpy as np

from reckit.fairsim import SimConfig, four_fifths_check, paired_runs, run_simulation, trade_off_test


def show(cfg: SimConfig):
    traj = run_simulation(cfg)
    print(f"\n{cfg.classifier_variant} classifier, {cfg.iterations} rounds")
    print("  round  label gap   parity ratio  protected FN")
    gaps = traj.get("label_rate_difference")
    ratios = traj.get("parity_ratio")
    fn = traj.get("false_negatives", "0")  # group 0 is protected
    for t in range(len(gaps)):
        print(f"  {t:5d} {gaps[t]:+10.3f} {ratios[t]:13.3f} {int(fn[t]):13d}")
    print(f"  protected FN over the run: {int(fn.sum())}; four-fifths rule at the end: {four_fifths_check(ratios[-1])}")


def main():
    # single runs are noisy; seed 1 is typical, seed 0 is the one pair that goes the other way
    base = SimConfig(help_target="low", seed=1)
    show(base)
    show(SimConfig(help_target="low", classifier_variant="unbiased", seed=1))

    res = trade_off_test(paired_runs(base, range(20)))
    print(f"\n20 paired seeds: biased run narrowed the label gap in {res.gap_wins},")
    print(f"  had more protected false negatives in {res.misclassification_wins},")
    print(f"  both in {res.joint_wins}; sign test p = {res.p_value:.2e}")


if __name__ == "__main__":
    main()
