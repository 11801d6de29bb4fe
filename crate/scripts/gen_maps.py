#!/usr/bin/env python3
"""Regenerates the fixture maps under fixtures/maps/.

Right-hand traffic, 3.5 m lanes, 10 m waypoint spacing.
"""
import json
import math
import os

LANE_W = 3.5
HALF = LANE_W / 2
EDGE = 7.0  # junction half-size
ARM = 60.0
OUT = os.path.join(os.path.dirname(__file__), "..", "fixtures", "maps")


def wrap(theta):
    t = (theta + math.pi) % (2 * math.pi) - math.pi
    return -math.pi if t >= math.pi else t


def r(v):
    return round(v, 6)


def r_heading(theta):
    h = round(theta, 6)
    return math.ceil(theta * 1e6) / 1e6 if h < -math.pi else h


class MapBuilder:
    def __init__(self, map_id, description):
        self.meta = {"schema_version": 1, "map_id": map_id, "description": description}
        self.waypoints, self.lanes, self.connectors, self.regions, self.signs = [], [], [], [], []

    def lane(self, lane_id, road_id, points, **extra):
        ids = []
        for i, (x, y) in enumerate(points):
            if i + 1 < len(points):
                nx, ny = points[i + 1]
            else:
                px, py = points[i - 1]
                nx, ny = x + (x - px), y + (y - py)
            wid = f"{lane_id}/{i:02d}"
            self.waypoints.append({"id": wid, "x": r(x), "y": r(y),
                                   "heading": r_heading(wrap(math.atan2(ny - y, nx - x))), "lane_id": lane_id})
            ids.append(wid)
        lane = {"id": lane_id, "road_id": road_id, "waypoints": ids, "width": LANE_W,
                "left_marker": "solid line", "right_marker": "none", "kind": "driving"}
        lane.update(extra)
        self.lanes.append(lane)
        return ids

    def dump(self):
        doc = {"meta": self.meta, "waypoints": self.waypoints, "lanes": self.lanes,
               "connectors": self.connectors, "regions": self.regions, "signs": self.signs}
        path = os.path.join(OUT, f"{self.meta['map_id']}.map.json")
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")


AXES = {"n": (0, 1), "s": (0, -1), "e": (1, 0), "w": (-1, 0)}


def rot(v, deg):
    c, s = round(math.cos(math.radians(deg))), round(math.sin(math.radians(deg)))
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def arm_for(direction):
    return next(k for k, a in AXES.items() if a == direction)


def junction(map_id, arms, tags, stop_arms, description):
    m = MapBuilder(map_id, description)
    ends = {}
    steps = int(ARM / 10)
    for arm in arms:
        ax = AXES[arm]
        for way in ("in", "out"):
            travel = (-ax[0], -ax[1]) if way == "in" else ax
            right = (travel[1], -travel[0])
            ds = [EDGE + 10 * k for k in range(steps + 1)]
            if way == "in":
                ds = ds[::-1]
            pts = [(ax[0] * d + right[0] * HALF, ax[1] * d + right[1] * HALF) for d in ds]
            ids = m.lane(f"lane_{arm}_{way}", f"road_{arm}", pts)
            ends[(arm, way)] = ids
    for arm in arms:
        travel = (-AXES[arm][0], -AXES[arm][1])
        for name, deg in (("straight", 0), ("left", 90), ("right", -90)):
            exit_arm = arm_for(rot(travel, deg))
            if exit_arm not in arms:
                continue
            m.connectors.append({"id": f"conn_{arm}_{name}", "from": ends[(arm, "in")][-1],
                                 "to": ends[(exit_arm, "out")][0], "kind": "junction"})
    m.regions.append({"id": "junction", "tags": tags,
                      "polygon": [[-EDGE, -EDGE], [EDGE, -EDGE], [EDGE, EDGE], [-EDGE, EDGE]]})
    for arm in stop_arms:
        ax = AXES[arm]
        travel = (-ax[0], -ax[1])
        right = (travel[1], -travel[0])
        d = EDGE + 1.0
        m.signs.append({"id": f"stop_{arm}", "token": "stop sign",
                        "x": r(ax[0] * d + right[0] * (LANE_W + 1.0)),
                        "y": r(ax[1] * d + right[1] * (LANE_W + 1.0)), "lane_id": f"lane_{arm}_in"})
    m.dump()


def straight():
    m = MapBuilder("straight", "220 m straight road: two eastbound lanes, one westbound lane, "
                               "speed limit sign at x=150 on the right eastbound lane")
    xs = [10.0 * k for k in range(23)]
    e0 = m.lane("lane_e0", "road_main", [(x, -3 * HALF) for x in xs],
                left_marker="broken line", right_marker="solid line", left_neighbor="lane_e1")
    e1 = m.lane("lane_e1", "road_main", [(x, -HALF) for x in xs],
                left_marker="double solid line", right_marker="broken line", right_neighbor="lane_e0")
    m.lane("lane_w0", "road_main", [(x, HALF) for x in reversed(xs)],
           left_marker="double solid line", right_marker="solid line")
    for k in range(len(xs) - 1):
        m.connectors.append({"id": f"conn_lc_e0_e1_{k:02d}", "from": e0[k], "to": e1[k + 1], "kind": "lane_change"})
        m.connectors.append({"id": f"conn_lc_e1_e0_{k:02d}", "from": e1[k], "to": e0[k + 1], "kind": "lane_change"})
    m.regions.append({"id": "road", "tags": ["multi-lane road", "straight road"],
                      "polygon": [[-1.0, -7.5], [221.0, -7.5], [221.0, 3.5], [-1.0, 3.5]]})
    m.signs.append({"id": "limit_e0", "token": "speed limit sign", "x": 150.0, "y": -7.5,
                    "lane_id": "lane_e0", "value": 5.0})
    m.dump()


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    junction("cross4", ["n", "s", "e", "w"], ["intersection"], ["n", "s"],
             "4-way intersection, one lane per direction on each arm, stop signs on the north and south arms")
    junction("tjunction", ["s", "e", "w"], ["intersection", "t-intersection"], ["s"],
             "T-junction: east-west through street, terminating street from the south with a stop sign")
    straight()
