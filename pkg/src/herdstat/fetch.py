"""Generic HTTP price-history fetcher with a file cache.

The fetcher is endpoint-agnostic: callers supply a URL template with
``{asset}``, ``{start}`` and ``{end}`` placeholders. Responses are cached
one file per (asset, range) so repeated calls never touch the network.
"""

from __future__ import annotations

import re
import urllib.error
import urllib.request
from pathlib import Path

from herdstat.errors import FetchError

_PLACEHOLDERS = ("{asset}", "{start}", "{end}")


def build_url(endpoint_template: str, asset: str, start: str, end: str) -> str:
    for ph in _PLACEHOLDERS:
        if ph not in endpoint_template:
            raise ValueError(f"endpoint template is missing the {ph} placeholder")
    return endpoint_template.format(asset=asset, start=start, end=end)


def cache_path(cache_dir, asset: str, start: str, end: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", f"{asset}_{start}_{end}")
    return Path(cache_dir) / f"{safe}.raw"


def fetch_history(endpoint_template: str, asset: str, start: str, end: str,
                  cache_dir, timeout: float = 30.0, force: bool = False) -> bytes:
    """Fetch one asset's history, serving repeats from the file cache.

    Parameters
    ----------
    endpoint_template : str
        URL with ``{asset}``, ``{start}``, ``{end}`` placeholders.
    asset, start, end : str
        Substituted verbatim into the template and used as the cache key.
    cache_dir : path-like
        Directory for cache files (created if absent).
    timeout : float
        Socket timeout in seconds.
    force : bool
        Re-download even when a cache file exists.

    Returns
    -------
    bytes
        Raw response body.

    Raises
    ------
    FetchError
        On non-2xx status, timeout/network failure, or cache-write failure.
    """
    url = build_url(endpoint_template, str(asset), str(start), str(end))
    target = cache_path(cache_dir, str(asset), str(start), str(end))
    if target.exists() and not force:
        return target.read_bytes()
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            status = getattr(response, "status", 200)
            body = response.read()
    except urllib.error.HTTPError as exc:
        raise FetchError(f"HTTP {exc.code} fetching {url}", url=url, status=exc.code) from None
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise FetchError(f"fetch failed for {url}: {exc}", url=url) from None
    if not 200 <= status < 300:
        raise FetchError(f"HTTP {status} fetching {url}", url=url, status=status)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(body)
    except OSError as exc:
        raise FetchError(f"could not write cache file {target}: {exc}", url=url) from None
    return body
