#!/usr/bin/env python3
"""Regenerate the bundled desk dataset and gazetteer.

Deterministic: fixed seed, fixed landmark placements. The two demo landmarks
sit exactly 461 m apart and one hotel sits exactly 200 m from the first, so
the demo walkthrough has stable ground truth.
"""

import csv
import math
import random
from pathlib import Path

R = 6_371_000.0
CENTER_LAT, CENTER_LON = 1.29310, 103.85580
OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "seqsearch" / "data"

CATEGORIES = [
    "cafe", "restaurant", "hotel", "gym", "mall", "station", "park",
    "museum", "pharmacy", "school", "bar", "library", "cinema", "clinic", "bakery",
]

NAME_LEFT = [
    "Harbour", "Marina", "Raffles", "Esplanade", "Fountain", "Orchid", "Pavilion",
    "Summit", "Crescent", "Lotus", "Anchor", "Beacon", "Cascade", "Meridian",
    "Quayside", "Sapphire", "Veranda", "Willow", "Zenith", "Compass",
]
NAME_RIGHT = {
    "cafe": ["Cafe", "Coffee House", "Espresso Bar"],
    "restaurant": ["Kitchen", "Dining Room", "Eatery"],
    "hotel": ["Hotel", "Suites", "Residences"],
    "gym": ["Fitness", "Gym", "Training Club"],
    "mall": ["Mall", "Galleria", "Arcade"],
    "station": ["Station", "Interchange", "Terminal"],
    "park": ["Park", "Green", "Gardens"],
    "museum": ["Museum", "Gallery", "Exhibits"],
    "pharmacy": ["Pharmacy", "Dispensary", "Chemist"],
    "school": ["School", "Academy", "Institute"],
    "bar": ["Bar", "Taproom", "Lounge"],
    "library": ["Library", "Reading Room", "Archive"],
    "cinema": ["Cinema", "Screens", "Picturehouse"],
    "clinic": ["Clinic", "Medical Centre", "Health Hub"],
    "bakery": ["Bakery", "Patisserie", "Bakehouse"],
}


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R * math.atan2(math.sqrt(a), math.sqrt(1 - a))


def solve_offset(target_m, axis):
    """Degrees of lat (axis=0) or lon (axis=1) giving target_m from the center."""
    lo, hi = 0.0, 0.05
    for _ in range(100):
        mid = (lo + hi) / 2
        lat = CENTER_LAT + (mid if axis == 0 else 0)
        lon = CENTER_LON + (mid if axis == 1 else 0)
        if haversine(CENTER_LAT, CENTER_LON, lat, lon) < target_m:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def main():
    rng = random.Random(20240731)
    rows = []

    def add(name, category, lat, lon):
        rows.append((f"sg{len(rows) + 1:03d}", name, lat, lon, category))

    # demo landmarks with exact spacing
    add("Suntec City", "mall", CENTER_LAT, CENTER_LON)
    add("Anytime Fitness City Hall", "gym", CENTER_LAT, CENTER_LON - solve_offset(461.0, 1))
    add("Harbourline Hotel", "hotel", CENTER_LAT + solve_offset(200.0, 0), CENTER_LON)
    # more hotels inside 1 km
    add("Marina Vista Hotel", "hotel", CENTER_LAT - solve_offset(350.0, 0), CENTER_LON)
    add("Esplanade Grand Hotel", "hotel", CENTER_LAT, CENTER_LON + solve_offset(520.0, 1))
    add("Quayside Suites", "hotel", CENTER_LAT + solve_offset(640.0, 0), CENTER_LON)
    add("Beacon Bay Hotel", "hotel", CENTER_LAT, CENTER_LON - solve_offset(820.0, 1))
    # a duplicated name for ambiguity handling
    add("Starbucks", "cafe", CENTER_LAT + 0.0021, CENTER_LON + 0.0017)
    add("Starbucks", "cafe", CENTER_LAT - 0.0018, CENTER_LON - 0.0024)

    seen_names = {r[1] for r in rows}
    while len(rows) < 220:
        category = rng.choice(CATEGORIES)
        name = f"{rng.choice(NAME_LEFT)} {rng.choice(NAME_RIGHT[category])}"
        if name in seen_names:
            continue
        seen_names.add(name)
        # uniform in a ~1.3 km disc around the center
        radius = 1300.0 * math.sqrt(rng.random())
        theta = rng.uniform(0, 2 * math.pi)
        dlat = (radius * math.cos(theta)) / (math.pi * R / 180.0)
        dlon = (radius * math.sin(theta)) / (math.pi * R / 180.0 * math.cos(math.radians(CENTER_LAT)))
        add(name, category, CENTER_LAT + dlat, CENTER_LON + dlon)

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with open(OUT_DIR / "pois.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "name", "lat", "lon", "category"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.7f}", f"{row[3]:.7f}", row[4]])

    with open(OUT_DIR / "gazetteer.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "lat", "lon", "radius_m"])
        for name, lat, lon, radius in [
            ("sydney", 1.2935, 103.8560, 4000),
            ("singapore", 1.2931, 103.8558, 8000),
            ("city hall", 1.2930, 103.8520, 1500),
            ("marina bay", 1.2840, 103.8610, 2500),
            ("downtown core", 1.2800, 103.8500, 3000),
            ("suntec", 1.2931, 103.8558, 1200),
            ("orchard", 1.3040, 103.8320, 2000),
            ("bugis", 1.3000, 103.8550, 1500),
        ]:
            writer.writerow([name, lat, lon, radius])

    hotels = [r for r in rows if r[4] == "hotel" and haversine(CENTER_LAT, CENTER_LON, r[2], r[3]) <= 1000]
    d_gym = haversine(rows[0][2], rows[0][3], rows[1][2], rows[1][3])
    d_hotel = haversine(rows[0][2], rows[0][3], rows[2][2], rows[2][3])
    print(f"wrote {len(rows)} pois; gym at {d_gym:.2f} m, nearest hotel at {d_hotel:.2f} m, "
          f"{len(hotels)} hotels within 1 km")


if __name__ == "__main__":
    main()
