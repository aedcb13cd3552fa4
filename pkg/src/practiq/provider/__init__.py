from practiq.provider.base import (
    Decode,
    Provider,
    ProviderRequest,
    ProviderResponse,
    Task,
    ask,
    load_prompt,
    parse_tagged,
)
from practiq.provider.mock import MockProvider

__all__ = [
    "Decode",
    "MockProvider",
    "Provider",
    "ProviderRequest",
    "ProviderResponse",
    "Task",
    "ask",
    "load_prompt",
    "make_provider",
    "parse_tagged",
]


def make_provider(kind: str, seed: int = 0, **kwargs) -> Provider:
    if kind == "mock":
        return MockProvider(seed=seed, **kwargs)
    if kind == "live":
        from practiq.provider.live import LiveProvider

        return LiveProvider.from_env(**kwargs)
    raise ValueError(f"unknown provider {kind!r}")
