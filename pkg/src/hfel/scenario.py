"""Random scenario generation and the plain-text scenario file format."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .model import DeviceProfile, EdgeServerProfile, World

FORMAT_VERSION = 1
MB_BITS = 8e6


@dataclass(frozen=True)
class ScenarioParams:
    n_devices: int = 15
    n_servers: int = 5
    seed: int = 0
    area_m: float = 500.0
    radius_m: float = 250.0
    bandwidth_hz: float = 10e6
    tx_power_w: float = 0.2
    f_min_hz: float = 1e9
    f_max_hz: float = 10e9
    density_min: float = 30.0  # cycles per bit
    density_max: float = 100.0
    size_min_mb: float = 5.0
    size_max_mb: float = 10.0
    update_nats: float = 25000.0
    alpha: float = 2e-28
    cloud_rate: float = 5e6  # nats/s
    cloud_tx_power_w: float = 1.0
    cloud_update_nats: float = 25000.0
    gain_g0: float = 1.0
    gain_ref_m: float = 1.0
    gain_exponent: float = 3.0


@dataclass(frozen=True)
class Scenario:
    params: ScenarioParams
    world: World
    device_xy: np.ndarray = field(repr=False)
    server_xy: np.ndarray = field(repr=False)


def channel_gain(distance: float, params: ScenarioParams) -> float:
    """Distance path loss g0 * (l_ref / l)^kappa, with l clamped at l_ref."""
    d = max(distance, params.gain_ref_m)
    return params.gain_g0 * (params.gain_ref_m / d) ** params.gain_exponent


def build_world(params: ScenarioParams, device_xy, server_xy, density, size_bits) -> World:
    n_dev, n_srv = len(device_xy), len(server_xy)
    dist = np.linalg.norm(device_xy[:, None, :] - server_xy[None, :, :], axis=2)
    avail = dist <= params.radius_m
    # nearest-server fallback for isolated devices; an isolated server keeps
    # its nearest device as a candidate so every availability set is nonempty
    for n in np.flatnonzero(~avail.any(axis=1)):
        avail[n, int(np.argmin(dist[n]))] = True
    for i in np.flatnonzero(~avail.any(axis=0)):
        avail[int(np.argmin(dist[:, i])), i] = True
    devices = []
    for n in range(n_dev):
        reach = [int(i) for i in np.flatnonzero(avail[n])]
        devices.append(DeviceProfile(
            id=n,
            cycles_per_sample=float(density[n]),
            data_size=float(size_bits[n]),
            f_min=params.f_min_hz,
            f_max=params.f_max_hz,
            alpha=params.alpha,
            tx_power=params.tx_power_w,
            channel_gain={i: channel_gain(float(dist[n, i]), params) for i in reach},
            update_size=params.update_nats,
            distance={i: float(dist[n, i]) for i in reach},
        ))
    servers = [EdgeServerProfile(
        id=i,
        bandwidth=params.bandwidth_hz,
        cloud_rate=params.cloud_rate,
        cloud_tx_power=params.cloud_tx_power_w,
        cloud_update_size=params.cloud_update_nats,
        available_devices=frozenset(int(n) for n in np.flatnonzero(avail[:, i])),
    ) for i in range(n_srv)]
    return World(devices, servers)


def generate_scenario(params: ScenarioParams) -> Scenario:
    if params.n_servers < 1:
        raise ScenarioError("need at least one edge server")
    if params.n_devices < 1:
        raise ScenarioError("need at least one device")
    rng = np.random.default_rng(params.seed)
    server_xy = rng.uniform(0.0, params.area_m, size=(params.n_servers, 2))
    device_xy = rng.uniform(0.0, params.area_m, size=(params.n_devices, 2))
    density = rng.uniform(params.density_min, params.density_max, size=params.n_devices)
    size_bits = rng.uniform(params.size_min_mb, params.size_max_mb, size=params.n_devices) * MB_BITS
    world = build_world(params, device_xy, server_xy, density, size_bits)
    return Scenario(params, world, device_xy, server_xy)


# ---------------------------------------------------------------- file format

_SERVER_COLS = ["id", "x_m", "y_m", "bandwidth_hz", "cloud_rate_nats_per_s", "cloud_tx_power_w",
                "cloud_update_nats"]
_DEVICE_COLS = ["id", "x_m", "y_m", "cycles_per_bit", "data_bits", "f_min_hz", "f_max_hz", "alpha",
                "tx_power_w", "update_nats"]
_LINK_COLS = ["device", "server", "distance_m", "channel_gain"]


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def dumps_scenario(scn: Scenario) -> str:
    out = io.StringIO()
    out.write("# hfel scenario\n")
    out.write(f"format_version = {FORMAT_VERSION}\n")
    for f in fields(ScenarioParams):
        v = getattr(scn.params, f.name)
        out.write(f"{f.name} = {_num(int(v) if f.type in ('int', int) else float(v))}\n")
    world = scn.world
    out.write("\n[servers]\n" + ",".join(_SERVER_COLS) + "\n")
    for s in world.servers:
        x, y = scn.server_xy[s.id]
        out.write(",".join(_num(v) for v in (s.id, x, y, s.bandwidth, s.cloud_rate, s.cloud_tx_power,
                                             s.cloud_update_size)) + "\n")
    out.write("\n[devices]\n" + ",".join(_DEVICE_COLS) + "\n")
    for d in world.devices:
        x, y = scn.device_xy[d.id]
        out.write(",".join(_num(v) for v in (d.id, x, y, d.cycles_per_sample, d.data_size, d.f_min, d.f_max,
                                             d.alpha, d.tx_power, d.update_size)) + "\n")
    out.write("\n[links]\n" + ",".join(_LINK_COLS) + "\n")
    for d in world.devices:
        for i in sorted(d.channel_gain):
            dist = d.distance.get(i, math.nan)
            out.write(",".join(_num(v) for v in (d.id, i, dist, d.channel_gain[i])) + "\n")
    return out.getvalue()


def write_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(scn))


def _parse_value(raw: str):
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def loads_scenario(text: str) -> Scenario:
    header = {}
    tables = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            tables[current] = []
            continue
        if current is None:
            if "=" not in line:
                raise ScenarioError(f"line {lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            try:
                header[key.strip()] = _parse_value(raw.strip())
            except ValueError:
                raise ScenarioError(f"line {lineno}: bad value for {key.strip()!r}") from None
        else:
            tables[current].append((lineno, line.split(",")))
    version = header.pop("format_version", None)
    if version != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format_version {version!r}")
    known = {f.name: f for f in fields(ScenarioParams)}
    unknown = set(header) - set(known)
    if unknown:
        raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in header.items():
        kw[k] = int(v) if known[k].type in ("int", int) else float(v)
    params = ScenarioParams(**kw)

    def rows(name, cols):
        if name not in tables:
            raise ScenarioError(f"missing [{name}] table")
        body = tables[name]
        if not body or body[0][1] != cols:
            raise ScenarioError(f"[{name}] header must be {','.join(cols)}")
        out = []
        for lineno, cells in body[1:]:
            if len(cells) != len(cols):
                raise ScenarioError(f"line {lineno}: expected {len(cols)} fields in [{name}]")
            row = []
            for col, c in zip(cols, cells):
                try:
                    row.append(_parse_value(c))
                except ValueError:
                    raise ScenarioError(f"line {lineno}: non-numeric {col} in [{name}]: {c!r}") from None
            out.append(row)
        return out

    srv_rows = rows("servers", _SERVER_COLS)
    dev_rows = rows("devices", _DEVICE_COLS)
    link_rows = rows("links", _LINK_COLS)
    gains = {r[0]: {} for r in dev_rows}
    dists = {r[0]: {} for r in dev_rows}
    for dev, srv, dist, gain in link_rows:
        if dev not in gains:
            raise ScenarioError(f"link refers to unknown device {dev}")
        gains[dev][int(srv)] = float(gain)
        if not math.isnan(dist):
            dists[dev][int(srv)] = float(dist)
    try:
        devices = [DeviceProfile(int(r[0]), float(r[3]), float(r[4]), float(r[5]), float(r[6]), float(r[7]),
                                 float(r[8]), gains[r[0]], float(r[9]), dists[r[0]]) for r in dev_rows]
        servers = [EdgeServerProfile(int(r[0]), float(r[3]), float(r[4]), float(r[5]), float(r[6]),
                                     frozenset(n for n in gains if int(r[0]) in gains[n])) for r in srv_rows]
        world = World(devices, servers)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    device_xy = np.array([[float(r[1]), float(r[2])] for r in dev_rows]).reshape(-1, 2)
    server_xy = np.array([[float(r[1]), float(r[2])] for r in srv_rows]).reshape(-1, 2)
    return Scenario(params, world, device_xy, server_xy)


def read_scenario(path) -> Scenario:
    return loads_scenario(Path(path).read_text())
