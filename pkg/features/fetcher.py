import json
import time
import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse, unquote

import httpx
from bs4 import BeautifulSoup

logger = logging.getLogger(__name__)

DEFAULT_USER_AGENT = "wextract/1.0 (browserless price extractor; +https://github.com/wextract)"


class Unavailable(Exception):
    """The page could not be retrieved (network error, non-2xx status, empty body, timeout)."""


@dataclass(frozen=True, slots=True)
class PageUrl:
    raw: str
    host: str

    @classmethod
    def parse(cls, raw: str) -> "PageUrl":
        raw = (raw or "").strip()
        parts = urlparse(raw)
        scheme = parts.scheme.lower()
        if scheme in ("http", "https"):
            host = (parts.hostname or "").lower()
            if not host:
                raise ValueError(f"URL has no host: {raw!r}")
            return cls(raw=raw, host=host)
        if scheme == "file":
            if not (parts.netloc or parts.path):
                raise ValueError(f"file URL has no path: {raw!r}")
            return cls(raw=raw, host="localhost")
        raise ValueError(f"Not an absolute http(s) or file URL: {raw!r}")

    @property
    def is_file(self) -> bool:
        return self.raw.lower().startswith("file://")

    def local_path(self) -> Path:
        # file://fixtures/x.html is relative to the working directory, file:///x.html absolute
        parts = urlparse(self.raw)
        return Path(unquote(parts.netloc + parts.path))

    def __str__(self):
        return self.raw


@dataclass(frozen=True, slots=True)
class RawHtml:
    body: str
    fetched_at: float
    source: str  # "network" | "local-file"
    final_url: str = ""


class CorpusIndex:
    """Maps page urls to local files, so corpus pages are read from disk instead of the network."""

    def __init__(self, root: Path, paths: dict):
        self.root = Path(root)
        self.paths = dict(paths)

    @classmethod
    def from_manifest(cls, manifest_path) -> "CorpusIndex":
        manifest_path = Path(manifest_path)
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        paths = {entry["url"]: entry["local_path"] for entry in data.get("entries", [])}
        return cls(manifest_path.parent, paths)

    def lookup(self, url: PageUrl):
        relative = self.paths.get(url.raw)
        return self.root / relative if relative else None


class Fetcher:
    """Browserless retrieval of raw HTML: one GET per page, no scripts, no assets."""

    def __init__(self, timeout: float = 10.0, user_agent: str = DEFAULT_USER_AGENT,
                 corpus: CorpusIndex = None, strict_empty: bool = False, max_redirects: int = 5):
        self.timeout = timeout
        self.user_agent = user_agent
        self.corpus = corpus
        self.strict_empty = strict_empty
        self.max_redirects = max_redirects
        self._client = None
        self._last_fetched_at = 0.0
        # bodies read by is_available, handed to the next fetch of the same url
        self._probed = {}

    async def __aenter__(self):
        return self

    async def __aexit__(self, *exc):
        await self.close()

    async def close(self):
        if self._client is not None:
            await self._client.aclose()
            self._client = None

    def _get_client(self) -> httpx.AsyncClient:
        if self._client is None:
            self._client = httpx.AsyncClient(
                timeout=self.timeout,
                follow_redirects=True,
                max_redirects=self.max_redirects,
                headers={"User-Agent": self.user_agent},
                default_encoding="utf-8",
            )
        return self._client

    def _stamp(self) -> float:
        self._last_fetched_at = max(self._last_fetched_at, time.time())
        return self._last_fetched_at

    def _is_empty(self, body: str) -> bool:
        if not body.strip():
            return True
        return self.strict_empty and not BeautifulSoup(body, "html.parser").get_text().strip()

    async def _read_local(self, path: Path, url: PageUrl) -> RawHtml:
        try:
            data = await asyncio.to_thread(path.read_bytes)
        except OSError as e:
            raise Unavailable(f"{url}: {e}") from e
        body = data.decode("utf-8", errors="replace")
        if self._is_empty(body):
            raise Unavailable(f"{url}: empty file {path}")
        return RawHtml(body=body, fetched_at=self._stamp(), source="local-file", final_url=url.raw)

    async def _get(self, url: PageUrl) -> RawHtml:
        try:
            response = await self._get_client().get(url.raw)
        except httpx.TooManyRedirects as e:
            raise Unavailable(f"{url}: more than {self.max_redirects} redirects") from e
        except httpx.HTTPError as e:
            raise Unavailable(f"{url}: {e.__class__.__name__}: {e}") from e
        if not response.is_success:
            raise Unavailable(f"{url}: HTTP {response.status_code}")
        body = response.text
        if self._is_empty(body):
            raise Unavailable(f"{url}: empty body")
        return RawHtml(body=body, fetched_at=self._stamp(), source="network", final_url=str(response.url))

    async def fetch_raw_html(self, url: PageUrl) -> RawHtml:
        probed = self._probed.pop(url.raw, None)
        if probed is not None:
            return probed
        local = self.corpus.lookup(url) if self.corpus else None
        if local is not None:
            return await self._read_local(local, url)
        if url.is_file:
            return await self._read_local(url.local_path(), url)
        return await self._get(url)

    async def is_available(self, url: PageUrl) -> bool:
        self._probed.pop(url.raw, None)
        try:
            page = await self.fetch_raw_html(url)
        except Unavailable as e:
            logger.debug(f"Page not available: {e}")
            return False
        except Exception:
            logger.exception(f"Unexpected error while probing {url}")
            return False
        self._probed[url.raw] = page
        return True

    def forget(self, url: PageUrl):
        """Drops a probed body that no tier ended up needing."""
        self._probed.pop(url.raw, None)
