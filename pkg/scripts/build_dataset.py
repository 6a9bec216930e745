#!/usr/bin/env python3
"""Rebuild the bundled top-40 city CSV from local source exports.

Inputs (both local files; nothing is fetched):

  --hierarchy  CSV export of the open countries/states/cities database
               with columns: name (city), state_name, country_name,
               region_name, subregion_name (extra columns are ignored).
  --population CSV with columns: city, country, population (the 2025
               estimate list, e.g. a World Population Review export).

Pipeline: join population onto hierarchy by (city name, country name),
resolve join collisions by keeping the higher-population row, take the
top N by population, assign dense ids in first-appearance order, write
the package fixture format.

Usage:
  python scripts/build_dataset.py --hierarchy cities.csv \
      --population populations.csv --out top_40_pop_cities.csv [--top-n 40]
"""

from __future__ import annotations

import argparse
import csv
import sys
import unicodedata
from pathlib import Path

FIXTURE_COLUMNS = [
    "city_id",
    "city_name",
    "state_id",
    "state_name",
    "country_id",
    "country_name",
    "region_id",
    "region_name",
    "subregion_id",
    "subregion_name",
    "population_2025",
]


def ascii_name(text: str) -> str:
    """ASCII transliteration: strip diacritics, drop what cannot map."""
    normalized = unicodedata.normalize("NFKD", text)
    return "".join(c for c in normalized if ord(c) < 128).strip()


def load_population(path: Path) -> dict[tuple[str, str], int]:
    table: dict[tuple[str, str], int] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            key = (ascii_name(row["city"]).casefold(), ascii_name(row["country"]).casefold())
            population = int(str(row["population"]).replace(",", ""))
            # Duplicate population rows for one (city, country): keep the max.
            table[key] = max(table.get(key, 0), population)
    return table


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--hierarchy", required=True, type=Path)
    parser.add_argument("--population", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--top-n", type=int, default=40)
    args = parser.parse_args()

    population = load_population(args.population)
    merged = []
    with args.hierarchy.open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            names = {
                "city_name": ascii_name(row["name"]),
                "state_name": ascii_name(row["state_name"]),
                "country_name": ascii_name(row["country_name"]),
                "region_name": ascii_name(row["region_name"]),
                "subregion_name": ascii_name(row["subregion_name"]),
            }
            if not all(names.values()):
                continue
            key = (names["city_name"].casefold(), names["country_name"].casefold())
            if key in population:
                merged.append((population[key], names))

    # Collision rule: several hierarchy rows matching one (city, country)
    # population key keep only the first after the population-descending
    # sort, i.e. the candidate attached to the larger city.
    merged.sort(key=lambda item: (-item[0], item[1]["state_name"]))
    seen: set[tuple[str, str]] = set()
    rows = []
    for pop, names in merged:
        key = (names["city_name"].casefold(), names["country_name"].casefold())
        if key in seen:
            continue
        seen.add(key)
        rows.append((pop, names))
        if len(rows) == args.top_n:
            break
    if len(rows) < args.top_n:
        print(f"only {len(rows)} matched rows, wanted {args.top_n}", file=sys.stderr)
        return 1

    ids: dict[str, dict[str, int]] = {level: {} for level in ("state", "country", "region", "subregion")}

    def dense_id(level: str, name: str, scope: str = "") -> int:
        # States of different countries may share a name; scope them.
        return ids[level].setdefault(f"{scope}|{name}", len(ids[level]) + 1)

    with args.out.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=FIXTURE_COLUMNS)
        writer.writeheader()
        for city_id, (pop, names) in enumerate(rows, start=1):
            writer.writerow(
                {
                    "city_id": city_id,
                    "city_name": names["city_name"],
                    "state_id": dense_id("state", names["state_name"], names["country_name"]),
                    "state_name": names["state_name"],
                    "country_id": dense_id("country", names["country_name"]),
                    "country_name": names["country_name"],
                    "region_id": dense_id("region", names["region_name"]),
                    "region_name": names["region_name"],
                    "subregion_id": dense_id("subregion", names["subregion_name"]),
                    "subregion_name": names["subregion_name"],
                    "population_2025": pop,
                }
            )
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
