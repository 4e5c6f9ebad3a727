"""Daily broadcast-navigation download with an on-disk cache.

Cache layout is ``{cache_dir}/{yyyy}/{ddd}/{filename}``. Downloads go to a
temporary file in the target directory and are renamed into place only when
complete, so a partially transferred file is never visible at the final path.
"""
from __future__ import annotations

import datetime as dt
import gzip
import http.client
import os
import tempfile
import threading
import urllib.error
import urllib.request
from pathlib import Path

from ..errors import NetworkError, NotAvailable

CACHE_ENV = "RAWGNSS_CACHE_DIR"
BASE_URL_ENV = "RAWGNSS_BASE_URL"
DEFAULT_BASE_URL = "https://igs.bkg.bund.de/root_ftp/IGS/BRDC"
DEFAULT_CACHE_DIR = Path.home() / ".cache" / "rawgnss"
FILENAME_TEMPLATE = "BRDC00IGS_R_{yyyy}{ddd}0000_01D_MN.rnx.gz"

_locks_guard = threading.Lock()
_path_locks: dict = {}


def _lock_for(path: Path) -> threading.Lock:
    with _locks_guard:
        return _path_locks.setdefault(str(path), threading.Lock())


def nav_filename(day: dt.date) -> str:
    return FILENAME_TEMPLATE.format(yyyy=f"{day.year:04d}", ddd=f"{day.timetuple().tm_yday:03d}")


def cache_path(day: dt.date, cache_dir=None) -> Path:
    cache_dir = Path(cache_dir or os.environ.get(CACHE_ENV) or DEFAULT_CACHE_DIR)
    return cache_dir / f"{day.year:04d}" / f"{day.timetuple().tm_yday:03d}" / nav_filename(day)


def fetch_ephemeris(day: dt.date, cache_dir=None, base_url=None,
                    urlopen=urllib.request.urlopen, timeout: float = 30.0) -> Path:
    """Return the local path of the navigation file for ``day``, downloading it if needed.

    ``urlopen`` is injectable for testing; it must behave like
    :func:`urllib.request.urlopen`.
    """
    target = cache_path(day, cache_dir)
    if target.exists():
        return target
    base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
    url = f"{base_url}/{day.year:04d}/{day.timetuple().tm_yday:03d}/{target.name}"
    with _lock_for(target):
        if target.exists():  # another thread finished the same download
            return target
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=".part-", dir=target.parent)
        try:
            with os.fdopen(fd, "wb") as out:
                try:
                    with urlopen(url, timeout=timeout) as resp:
                        expected = resp.headers.get("Content-Length") if resp.headers else None
                        received = 0
                        while True:
                            chunk = resp.read(1 << 16)
                            if not chunk:
                                break
                            out.write(chunk)
                            received += len(chunk)
                except urllib.error.HTTPError as exc:
                    if exc.code == 404:
                        raise NotAvailable(f"{url}: not found") from None
                    raise NetworkError(f"{url}: HTTP {exc.code}") from None
                except (urllib.error.URLError, http.client.HTTPException, OSError) as exc:
                    raise NetworkError(f"{url}: {exc}") from None
            if expected is not None and int(expected) != received:
                raise NetworkError(f"{url}: received {received} of {expected} bytes")
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    return target


def read_nav_text(path) -> str:
    """Read a navigation file, transparently decompressing ``.gz`` and ``.Z``."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz" or data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    elif path.suffix == ".Z" or data[:2] == b"\x1f\x9d":
        import unlzw3

        data = unlzw3.unlzw(data)
    return data.decode("ascii", errors="replace")
