"""Entry points: serve the generation endpoint, or fine-tune a checkpoint."""
from __future__ import annotations

import argparse
import logging
import sys

from .engine import GRAMMAR_TOKENS, ServiceConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adeqa-model-service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve /v1/generate and /healthz")
    p.add_argument("--model", default="tiny", help="checkpoint dir, or 'tiny' for a fresh model")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--max-input-length", type=int, default=128)
    p.add_argument("--max-target-length", type=int, default=32)
    p.add_argument("--repetition-penalty", type=float, default=1.3)

    p = sub.add_parser("finetune", help="fine-tune on a prepared pairs JSONL file")
    p.add_argument("pairs", help="prepared pairs JSONL (question/context/answer per line)")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--base-model", default=None, help="checkpoint to continue from (default: fresh tiny model)")
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-input-length", type=int, default=128)
    p.add_argument("--max-target-length", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .app import create_app

        config = ServiceConfig(
            model=args.model,
            max_input_length=args.max_input_length,
            max_target_length=args.max_target_length,
            port=args.port,
            host=args.host,
            special_tokens=GRAMMAR_TOKENS,
            repetition_penalty=args.repetition_penalty,
        )
        uvicorn.run(create_app(config), host=config.host, port=config.port)
        return 0

    from .data import PairsFileError
    from .training import FinetuneConfig, finetune

    try:
        result = finetune(
            FinetuneConfig(
                pairs_path=args.pairs,
                output_dir=args.out,
                base_model=args.base_model,
                batch_size=args.batch_size,
                epochs=args.epochs,
                learning_rate=args.learning_rate,
                seed=args.seed,
                max_input_length=args.max_input_length,
                max_target_length=args.max_target_length,
            )
        )
    except (PairsFileError, FileNotFoundError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    print(f"checkpoint written to {result.checkpoint_dir}")
    print("per-epoch loss: " + ", ".join(f"{x:.4f}" for x in result.epoch_losses))
    return 0


if __name__ == "__main__":
    sys.exit(main())
