"""Few-shot sweep from a pretrained versus a randomly initialized encoder."""
from _common import emit, parser, run_config, work_dir

from rmgpt.evaluation import fewshot_inversions
from rmgpt.experiments import fewshot_experiment


def main() -> None:
    p = parser(__doc__)
    p.add_argument("--k", type=int, nargs="+", default=[1, 4, 8, 16])
    p.add_argument("--trials", type=int, default=5)
    args = p.parse_args()
    cfg, train = run_config(args)
    work, _tmp = work_dir(args)
    seeds = [args.seed + i for i in range(args.trials)]
    res = fewshot_experiment(work, cfg, train, ks=args.k, seeds=seeds, seed=args.seed)
    emit({label: {"table": [{"k": r.k, "mean": r.mean, "spread": r.spread,
                             "accuracies": r.accuracies} for r in rows],
                  "inversions": fewshot_inversions(rows)}
          for label, rows in res.items()}, args)


if __name__ == "__main__":
    main()
