import logging
from dataclasses import dataclass

from database.db import SocialStore
from utils.helpers import normalize_site

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SiteQuery:
    """An (entity, site) pair, as pulled out of a user's question upstream."""
    entity: str
    site: str

    def __post_init__(self):
        entity, site = (self.entity or "").strip(), (self.site or "").strip()
        if not entity or not site:
            raise ValueError("entity and site must both be non-empty")
        if not normalize_site(site):
            raise ValueError(f"site {site!r} has nothing to match on")
        object.__setattr__(self, "entity", entity)
        object.__setattr__(self, "site", site)


@dataclass(frozen=True, slots=True)
class MatchAnswer:
    url: object = None
    price: object = None
    observed_at: float = None

    @property
    def empty(self) -> bool:
        return self.url is None

    def to_dict(self) -> dict:
        if self.empty:
            return {}
        return {
            "url": self.url.raw,
            "amount": self.price.amount,
            "currency": self.price.currency_code,
            "observed_at": self.observed_at,
        }


def match_all(query: SiteQuery, store: SocialStore) -> list:
    """Every record of the site holding the entity, newest first."""
    records = store.find_by_site(query.entity, query.site)
    return [MatchAnswer(r.url, r.price, r.observed_at) for r in records]


def match(query: SiteQuery, store: SocialStore) -> MatchAnswer:
    answers = match_all(query, store)
    if not answers:
        logger.debug(f"No cached price for {query.entity!r} on {query.site!r}")
        return MatchAnswer()
    return answers[0]
