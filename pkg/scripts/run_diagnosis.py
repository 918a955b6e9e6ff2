"""Pretrain on unlabeled synthetic windows, prompt-adapt, report held-out diagnosis metrics."""
from _common import emit, parser, run_config, work_dir

from rmgpt.experiments import diagnosis_experiment


def main() -> None:
    p = parser(__doc__)
    p.add_argument("--mode", choices=("prompt", "finetune"), default="prompt")
    p.add_argument("--no-pretrain", action="store_true", help="adapt a randomly initialized encoder")
    p.add_argument("--unlabeled", type=int, default=100, help="unlabeled records (4 windows each)")
    p.add_argument("--per-class", type=int, default=100, help="labeled records per class")
    args = p.parse_args()
    cfg, train = run_config(args)
    work, _tmp = work_dir(args)
    res = diagnosis_experiment(work, cfg, train, seed=args.seed, n_unlabeled=args.unlabeled,
                               n_per_class=args.per_class, pretrain=not args.no_pretrain,
                               mode=args.mode)
    emit({"report": res.report, "separation_health_tokens": res.separation_tokens,
          "separation_raw_windows": res.separation_raw, "seconds": res.seconds,
          "pretrain_epoch_losses": res.pretrain_log.epoch_losses if res.pretrain_log else None,
          "adapt_epoch_losses": res.adapt_log.epoch_losses}, args)


if __name__ == "__main__":
    main()
