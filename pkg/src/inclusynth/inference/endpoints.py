from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    base_url: str
    model_name: str = ""
    # name of the environment variable holding the API key; never the key itself
    api_key_env: str | None = None
    temperature: float = 0.0
    max_tokens: int = 512
    mock: dict | None = field(default=None, compare=False)

    @property
    def is_mock(self) -> bool:
        return self.mock is not None or self.base_url.startswith("mock://")

    def public(self) -> dict:
        d = {
            "model_id": self.model_id,
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.mock is not None:
            d["mock"] = dict(self.mock)
        return d


def parse_endpoints(items: list[dict], source: str = "<endpoints>") -> list[ModelEndpoint]:
    endpoints, seen = [], set()
    for i, item in enumerate(items):
        where = f"{source}: endpoints[{i}]"
        if "api_key" in item:
            raise ConfigError(f"{where}: store the key in an environment variable and set api_key_env")
        try:
            ep = ModelEndpoint(
                model_id=str(item["model_id"]),
                base_url=str(item.get("base_url") or f"mock://{item['model_id']}"),
                model_name=str(item.get("model_name", "")),
                api_key_env=item.get("api_key_env"),
                temperature=float(item.get("temperature", 0.0)),
                max_tokens=int(item.get("max_tokens", 512)),
                mock=item.get("mock"),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc.args[0]}") from None
        if ep.model_id in seen:
            raise ConfigError(f"{where}: duplicate model_id {ep.model_id!r}")
        seen.add(ep.model_id)
        endpoints.append(ep)
    if not endpoints:
        raise ConfigError(f"{source}: no endpoints configured")
    return endpoints


def load_endpoints(path: str | Path) -> list[ModelEndpoint]:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    items = data.get("endpoints", data) if isinstance(data, dict) else data
    if not isinstance(items, list):
        raise ConfigError(f"{path}: expected a list under 'endpoints'")
    return parse_endpoints(items, str(path))
