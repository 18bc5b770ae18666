"""Error type shared by every layer of the toolchain.

Each failure carries a stable machine-readable code (documented in
docs/diagnostics.md) plus a human message; callers switch on ``code``.
"""


class TmError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
