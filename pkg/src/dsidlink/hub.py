"""Run the central services or a data center from the command line.

    dsidlink hub --config hub.yaml
    dsidlink center --id MAST --inventory mast.tsv --facility hst --port 8101

Hub configuration (YAML)::

    listen: {host: 127.0.0.1, port: 8080}
    resolver_base_url: http://127.0.0.1:8080
    refresh_interval: 21600        # seconds
    staleness_horizon: 604800      # seconds
    remote_timeout_ms: 5000
    batch_cap: 1000
    cache_ttl_s: 3600
    stale_serve: true
    correlation_log: correlations.log
    centers:
      - {id: MAST, base_url: http://127.0.0.1:8101}
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable

import yaml

from .center import CenterApp, DataCenter
from .clock import utc_now
from .correlations import CorrelationApp, CorrelationStore
from .identifier import is_facility_token
from .registry import DEFAULT_REFRESH_INTERVAL, DEFAULT_STALENESS_HORIZON, ProfileRegistry
from .resolver import LinkResolver, ResolverApp
from .verifier import DEFAULT_BATCH_CAP, MasterVerifier, VerifierApp
from .web import Dispatcher, HttpClient, ServiceServer, http_get

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class HubConfig:
    resolver_base_url: str
    centers: list[tuple[str, str]] = field(default_factory=list)
    host: str = "127.0.0.1"
    port: int = 8080
    refresh_interval: timedelta = DEFAULT_REFRESH_INTERVAL
    staleness_horizon: timedelta = DEFAULT_STALENESS_HORIZON
    remote_timeout_ms: int = 5000
    batch_cap: int = DEFAULT_BATCH_CAP
    cache_ttl_s: float = 3600.0
    stale_serve: bool = True
    correlation_log: Path | None = None

    @classmethod
    def from_mapping(cls, data: dict, base_dir: Path = Path(".")) -> "HubConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        listen = data.get("listen") or {}
        host = listen.get("host", "127.0.0.1")
        port = int(listen.get("port", 8080))
        centers = []
        for entry in data.get("centers") or []:
            try:
                center_id, base_url = entry["id"], entry["base_url"]
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"center entry needs id and base_url: {entry!r}") from exc
            if not is_facility_token(center_id):
                raise ConfigError(f"bad center id {center_id!r}")
            centers.append((center_id, base_url))
        log_path = data.get("correlation_log")
        return cls(
            resolver_base_url=data.get("resolver_base_url") or f"http://{host}:{port}",
            centers=centers,
            host=host,
            port=port,
            refresh_interval=timedelta(seconds=float(data.get("refresh_interval", 6 * 3600))),
            staleness_horizon=timedelta(seconds=float(data.get("staleness_horizon", 7 * 86400))),
            remote_timeout_ms=int(data.get("remote_timeout_ms", 5000)),
            batch_cap=int(data.get("batch_cap", DEFAULT_BATCH_CAP)),
            cache_ttl_s=float(data.get("cache_ttl_s", 3600)),
            stale_serve=bool(data.get("stale_serve", True)),
            correlation_log=(base_dir / log_path) if log_path else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "HubConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(yaml.safe_load(fh) or {}, path.parent)


@dataclass
class Hub:
    registry: ProfileRegistry
    verifier: MasterVerifier
    resolver: LinkResolver
    store: CorrelationStore

    @property
    def app(self) -> Dispatcher:
        return Dispatcher(VerifierApp(self.verifier), ResolverApp(self.resolver), CorrelationApp(self.store))


def build_hub(config: HubConfig, *, client: HttpClient = http_get, clock: Callable[[], datetime] = utc_now) -> Hub:
    timeout = config.remote_timeout_ms / 1000
    registry = ProfileRegistry(
        config.centers,
        client=client,
        clock=clock,
        refresh_interval=config.refresh_interval,
        staleness_horizon=config.staleness_horizon,
        fetch_timeout=timeout,
    )
    verifier = MasterVerifier(
        registry, config.resolver_base_url, client=client, remote_timeout=timeout, batch_cap=config.batch_cap
    )
    resolver = LinkResolver(
        registry, client=client, clock=clock, cache_ttl=config.cache_ttl_s, stale_serve=config.stale_serve,
        remote_timeout=timeout,
    )
    store = CorrelationStore(log_path=config.correlation_log, clock=clock)
    return Hub(registry, verifier, resolver, store)


def _serve_until_signalled(server: ServiceServer) -> None:
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    server.start()
    log.info("listening on %s", server.url)
    done.wait()
    server.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dsidlink")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    hub_cmd = sub.add_parser("hub", help="run master verifier, link resolver and correlation store")
    hub_cmd.add_argument("--config", required=True, type=Path)

    center_cmd = sub.add_parser("center", help="run a data center from an inventory file")
    center_cmd.add_argument("--id", required=True)
    center_cmd.add_argument("--name")
    center_cmd.add_argument("--inventory", type=Path)
    center_cmd.add_argument("--facility", action="append", default=[], help="facility served even without records")
    center_cmd.add_argument("--host", default="127.0.0.1")
    center_cmd.add_argument("--port", type=int, default=0)
    center_cmd.add_argument("--base-url", help="externally visible base URL (default http://host:port)")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(asctime)s %(name)s %(message)s")

    if args.command == "hub":
        try:
            config = HubConfig.load(args.config)
        except (OSError, ConfigError, yaml.YAMLError) as exc:
            sys.stderr.write(f"dsidlink: {exc}\n")
            return 2
        hub = build_hub(config)
        hub.registry.start()
        try:
            _serve_until_signalled(ServiceServer(hub.app, config.host, config.port))
        finally:
            hub.registry.stop()
        return 0

    # bind first so the profile can advertise the real port
    server = ServiceServer(None, args.host, args.port).start()
    center = DataCenter(
        args.id, args.name, base_url=args.base_url or server.url, facilities=args.facility,
        inventory_path=args.inventory,
    )
    server.set_app(CenterApp(center))
    _serve_until_signalled(server)
    return 0


if __name__ == "__main__":
    sys.exit(main())
