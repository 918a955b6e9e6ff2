"""Adapt the RUL head on synthetic run-to-failure lives and report held-out MAE/MSE."""
from _common import emit, parser, run_config, work_dir

from rmgpt.experiments import prognosis_experiment


def main() -> None:
    p = parser(__doc__)
    p.add_argument("--mode", choices=("prompt", "finetune"), default="prompt")
    p.add_argument("--no-pretrain", action="store_true")
    p.add_argument("--lives", type=int, default=20)
    args = p.parse_args()
    cfg, train = run_config(args)
    work, _tmp = work_dir(args)
    report, extra = prognosis_experiment(work, cfg, train, seed=args.seed, lives=args.lives,
                                         pretrain=not args.no_pretrain, mode=args.mode)
    model, test = extra["model"], extra["test"]
    pred = model.predict(test.windows, test.dataset)
    emit({"report": report, "seconds": extra["seconds"],
          "predictions": pred.tolist(), "targets": test.ruls.tolist(),
          "adapt_epoch_losses": extra["log"].epoch_losses}, args)


if __name__ == "__main__":
    main()
