"""Run the model server from the command line."""

from __future__ import annotations

import argparse

from .app import ModelServer


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="semantic-communication model server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9141)
    parser.add_argument("--verbose", action="store_true", help="log every request")
    args = parser.parse_args(argv)

    server = ModelServer((args.host, args.port), verbose=args.verbose)
    print(f"model server listening on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
