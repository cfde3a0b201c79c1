"""Small shared helpers."""

import os
import tempfile


def fft_workers() -> int:
    """Worker cap for FFT calls, from BELTRAMI_THREADS (default 1 for
    bit-reproducible reductions)."""
    try:
        return max(1, int(os.environ.get("BELTRAMI_THREADS", "1")))
    except ValueError:
        return 1


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
