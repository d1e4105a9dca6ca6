"""Feedback-length and sparsification trends at desk scale.

Trains one system per eta on noisy uplink channels, scores every feedback
length on the same Monte Carlo user draws, and writes a CSV table.

    python scripts/reproduce_trends.py --eta 16 64 --out trends.csv
"""
import argparse
import csv
import time

from csifeedback import channel, evaluation, offload, pipeline
from csifeedback.config import PROFILES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=sorted(PROFILES), default="desk")
    ap.add_argument("--b-list", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--eta", type=float, nargs="+", default=[16.0, 64.0])
    ap.add_argument("--oracle", choices=["analytic", "empirical"], default="empirical")
    ap.add_argument("--codebook", choices=["per_component", "shared"], default="shared")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="trends.csv")
    args = ap.parse_args()

    prof = PROFILES[args.scenario]
    sc = prof.scenario.replace(seed=args.seed)
    ul, dl = channel.generate_dataset(sc, prof.n_train + prof.n_test)
    train = channel.noisy_normalized(ul[:prof.n_train], prof.snr_ul_db, 1)
    test_true = dl[prof.n_train:]
    test_obs = channel.noisy_normalized(test_true, prof.snr_dl_db, 2)

    rows = []
    for eta in args.eta:
        t0 = time.perf_counter()
        cfg = pipeline.TrainConfig(tuple(args.b_list), eta, args.oracle, args.codebook)
        system = pipeline.train(train, sc.dims, cfg)
        stack = evaluation.ModelStack(system.states(), test_true, test_obs)
        report = evaluation.run_monte_carlo(evaluation.EvalConfig(8, prof.snr_dl_db), stack,
                                            args.b_list, args.trials, 3)
        for B, s in report.summary()["per_B"].items():
            st = system.state(int(B))
            rows.append({
                "eta": eta, "B": int(B), "N_P": st.n_p,
                "median_nmse_db": round(s["median_nmse_db"], 3),
                "mean_cosine": round(s["mean_cosine"], 4),
                "mean_sum_rate": round(s["mean_sum_rate"], 3),
                "sum_rate_stderr": round(s["sum_rate_stderr"], 3),
                "model_params": offload.count_model_params(sc.n_a, sc.n_c, st.n_p, eta, "sparsified"),
                "codebook_params": offload.count_codebook_params(st.allocation, args.codebook),
            })
        print(f"eta={eta:g}: {time.perf_counter() - t0:.1f} s")

    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print("  ".join(f"{k}={v}" for k, v in r.items()))


if __name__ == "__main__":
    main()
