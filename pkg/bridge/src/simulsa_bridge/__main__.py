"""Serve the bridge: `simulsa-bridge --model toy --port 8080`."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .adapters import load_adapter
from .config import BridgeConfig
from .service import create_app


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulsa-bridge",
        description="Serve an audio-language model behind the scoring wire protocol.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--model", default="toy",
                        help="'toy', 'toy:SPEC.json', or a checkpoint id")
    parser.add_argument("--device", default="cpu", help="device for checkpoint models")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--max-audio-s", type=float, default=120.0,
                        help="reject audio longer than this (413)")
    args = parser.parse_args(argv)

    config = BridgeConfig(
        model_id=args.model,
        device=args.device,
        max_audio_s=args.max_audio_s,
        port=args.port,
        host=args.host,
    )
    adapter = load_adapter(config.model_id, device=config.device)
    app = create_app(adapter, config)

    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
