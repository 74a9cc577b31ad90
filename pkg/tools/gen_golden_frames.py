#!/usr/bin/env python3
"""Regenerate the golden frame hex dumps used by tests and PROTOCOL.md."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from golden_frames import golden_messages

from voxcast.protocol import decode, encode


def main():
    for name, msg in golden_messages().items():
        frame = encode(msg, compress=False)
        assert decode(frame) == msg
        print(f'    "{name}": "{frame.hex()}",')


if __name__ == "__main__":
    main()
