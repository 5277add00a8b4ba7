"""Command line entry point: load a backend and serve it."""

from __future__ import annotations

import argparse
import sys

from .backends import load_backend
from .config import ServiceConfig, parse_models_spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auglm-service",
        description="Model server for the auglm/1 protocol.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8300)
    parser.add_argument(
        "--models",
        default="tiny",
        help="'tiny', 'tiny-<d>x<layers>[,hash-<dim>]', or 'hf:<lm-name>[,<embedder-name>]'",
    )
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=256)
    parser.add_argument("--lr-min", type=float, default=1e-7)
    parser.add_argument("--lr-max", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-level", default="info")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        lm_model, embed_model = parse_models_spec(args.models)
        config = ServiceConfig(
            lm_model=lm_model,
            embed_model=embed_model,
            device=args.device,
            max_batch=args.max_batch,
            lr_min=args.lr_min,
            lr_max=args.lr_max,
            seed=args.seed,
        )
        backend = load_backend(config)
    except ValueError as exc:
        print(f"auglm-service: {exc}", file=sys.stderr)
        return 2

    from .app import create_app
    from .server import serve

    print(
        f"serving {backend.name} (embed_dim={backend.embed_dim}) "
        f"on http://{args.host}:{args.port}",
        file=sys.stderr,
    )
    serve(create_app(backend, config), args.host, args.port, args.log_level)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
