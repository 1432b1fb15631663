"""Deterministic scenario generators."""

from __future__ import annotations

import random

from .federation import DEFAULT_TOPOLOGY


def _private_id(rng: random.Random, facility: str, n: int) -> str:
    style = rng.randrange(3)
    if style == 0:
        return f"{facility}.{n:05d}"
    if style == 1:
        return f"obs/{rng.randrange(1000, 99999)}-{n}"
    return f"{facility.upper()}_{rng.randrange(16**6):06x}:{n}"


def permanence_scenario(
    seed: int = 2006, datasets: int = 60, migrations: int = 3, updates: int = 12, outage: bool = True
) -> str:
    """Six default centers, seeded datasets, URL updates and facility migrations.

    Every quiescence point is followed by ``check-permanence``.
    """
    rng = random.Random(seed)
    owner = {f: cid for cid, (_, facs) in DEFAULT_TOPOLOGY.items() for f in facs}
    facilities = sorted(owner)
    lines = [
        f"# permanence scenario, seed {seed}",
        "config cache_ttl=3600 refresh_interval=21600 staleness_horizon=604800 remote_timeout=5",
    ]
    for cid, (_, facs) in DEFAULT_TOPOLOGY.items():
        lines.append(f"center {cid} {','.join(facs)}")

    seeded: list[tuple[str, str]] = []
    version: dict[tuple[str, str], int] = {}
    for n in range(datasets):
        facility = facilities[n % len(facilities)] if n < len(facilities) else rng.choice(facilities)
        private = _private_id(rng, facility, n)
        cid = owner[facility]
        seeded.append((facility, private))
        version[(facility, private)] = 0
        lines.append(f"seed {cid} {facility} {private} http://{cid.lower()}.archive.example/data/{facility}/{n}/v0")

    lines += ["", "publish", "check-permanence"]

    rounds = max(migrations, 1)
    per_round = [updates // rounds + (1 if r < updates % rounds else 0) for r in range(rounds)]
    for r in range(rounds):
        lines.append(f"# round {r + 1}")
        # warm the cache on a few links so that expiry matters
        for facility, private in rng.sample(seeded, 5):
            lines.append(f"resolve ADS/{facility.upper()}#{private}")
        for _ in range(per_round[r]):
            facility, private = rng.choice(seeded)
            version[(facility, private)] += 1
            v = version[(facility, private)]
            host = owner[facility].lower()
            lines.append(f"update-url {facility} {private} http://{host}.archive.example/moved/{facility}/{v}/{private}")
        if r < migrations:
            held = sorted({f for f, _ in seeded})
            facility = rng.choice(held)
            src = owner[facility]
            dst = rng.choice(sorted(c for c in DEFAULT_TOPOLOGY if c != src))
            owner[facility] = dst
            lines.append(f"migrate {facility} {src} {dst}")
        lines += ["advance 600", "quiesce", "check-permanence"]

    if outage:
        facility, private = seeded[0]
        victim = owner[facility]
        ident = f"ADS/{facility.upper()}#{private}"
        lines += [
            "# outage: stale-tolerant routing and degraded-mode redirects",
            f"resolve {ident} expect=redirect",
            f"kill {victim}",
            "advance 7200",
            f"resolve {ident} expect=redirect-stale",
            f"verify {ident} expect=center-unavailable within=5.1",
            f"revive {victim}",
            f"verify {ident} expect=valid",
            "quiesce",
            "check-permanence",
        ]
    return "\n".join(lines) + "\n"
