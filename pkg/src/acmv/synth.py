"""Synthetic grid city with hourly population counts.

Each region's count is the sum of
  * a spatially smooth base field with a slowly drifting smooth perturbation,
  * POI-driven visitors: shopping hubs draw a daytime bump, office regions a
    working-hours plateau on business days, both scaled by POI mass and
    damped on rainy hours,
  * rush-hour surges at transport stations (every third cell of a line) on
    business days. Stations in the back half of a line lag the front half by
    one hour. All stations of a line share a persistent line-level shock,
    and each station adds its own noise,
  * i.i.d. Gaussian noise,
clipped at zero and rounded. Holidays (every ``holiday_period``-th day) drop
the commuter terms. Every draw comes from one seeded generator.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
from scipy.ndimage import gaussian_filter

from acmv.config import GeneratorConfig
from acmv.context import WEATHER, ContextRecord
from acmv.data import CityScenario
from acmv.errors import ConfigError
from acmv.grid import GridSpec

# category roles cycle through this list when |C| != 6
ROLES = ("residential", "retail", "food", "office", "leisure", "misc")
SHOP_ROLES = ("retail", "food", "leisure")

RUSH = {7: 0.6, 8: 1.0, 9: 0.6, 17: 0.6, 18: 1.0, 19: 0.6}


def _validate(cfg):
    if cfg.rows < 1 or cfg.cols < 1:
        raise ConfigError(f"grid must be at least 1x1, got {cfg.rows}x{cfg.cols}")
    if cfg.n_categories < 1 or cfg.n_lines < 0 or cfg.days < 1:
        raise ConfigError("n_categories >= 1, n_lines >= 0 and days >= 1 are required")
    if not 0 <= cfg.n_hubs <= cfg.rows * cfg.cols:
        raise ConfigError(f"n_hubs={cfg.n_hubs} does not fit the grid")
    if cfg.holiday_period < 1:
        raise ConfigError("holiday_period must be >= 1")
    if not 0.0 <= cfg.rain_damping <= 1.0:
        raise ConfigError("rain_damping must lie in [0, 1]")
    if not 0.0 <= cfg.line_persistence < 1.0:
        raise ConfigError("line_persistence must lie in [0, 1)")
    if min(cfg.noise, cfg.line_noise, cfg.station_noise) < 0:
        raise ConfigError("noise scales must be nonnegative")


def _smooth(rng, shape, sigma):
    field = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode="nearest")
    std = field.std()
    return field / std if std > 0 else field


def _weather_chain(rng, T, persistence):
    states = np.empty(T, dtype=np.int64)
    states[0] = rng.integers(len(WEATHER))
    probs = np.array([0.6, 0.3, 0.1])
    for t in range(1, T):
        if rng.random() < persistence:
            states[t] = states[t - 1]
        else:
            states[t] = rng.choice(len(WEATHER), p=probs)
    return states


def _lines(rng, rows, cols, n_lines):
    """Straight lines (row, column or diagonal); every third cell is a station."""
    N = rows * cols
    G = np.zeros((N, n_lines), dtype=np.int64)
    lags = np.zeros((N, n_lines), dtype=np.int64)
    for m in range(n_lines):
        kind = ("row", "col", "diag")[m % 3]
        if kind == "row":
            r = rng.integers(rows)
            cells = [(r, j) for j in range(cols)]
        elif kind == "col":
            c = rng.integers(cols)
            cells = [(i, c) for i in range(rows)]
        else:
            off = rng.integers(-(rows // 2), cols // 2 + 1)
            cells = [(i, i + off) for i in range(rows) if 0 <= i + off < cols]
            if len(cells) < 2:
                cells = [(i, min(i, cols - 1)) for i in range(rows)]
        if rng.random() < 0.5:
            cells = cells[::-1]
        start = rng.integers(3)
        stations = cells[start::3]
        for k, (i, j) in enumerate(stations):
            n = i * cols + j
            G[n, m] = 1
            lags[n, m] = int(k >= len(stations) / 2)
    return G, lags


def _poi_counts(rng, cfg, n_nodes):
    roles = [ROLES[c % len(ROLES)] for c in range(cfg.n_categories)]
    kinds = np.array(["residential"] * n_nodes, dtype=object)
    order = rng.permutation(n_nodes)
    hubs = order[:cfg.n_hubs]
    n_office = int(round(cfg.office_fraction * (n_nodes - cfg.n_hubs)))
    offices = order[cfg.n_hubs:cfg.n_hubs + n_office]
    kinds[hubs] = "hub"
    kinds[offices] = "office"
    rates = {
        "hub": {"retail": 30, "food": 25, "leisure": 15, "office": 4, "residential": 1, "misc": 3},
        "office": {"office": 20, "food": 5, "retail": 1, "residential": 1, "misc": 2, "leisure": 0.5},
        "residential": {"residential": 8, "food": 1, "retail": 1, "misc": 1, "office": 0.3,
                        "leisure": 0.5},
    }
    lam = np.array([[rates[k][r] for r in roles] for k in kinds], dtype=np.float64)
    return rng.poisson(lam), roles, kinds


def generate_city(cfg=None, seed=0):
    cfg = cfg or GeneratorConfig()
    _validate(cfg)
    rng = np.random.default_rng(seed)
    grid = GridSpec(cfg.rows, cfg.cols, cfg.cell_size_m)
    N, T = grid.n_nodes, cfg.days * 24
    t = np.arange(T)
    hours = t % 24
    day = t // 24
    holiday = (day % cfg.holiday_period) == cfg.holiday_period - 1
    business = ~holiday

    weather = _weather_chain(rng, T, cfg.rain_persistence)
    rainy = weather == WEATHER.index("rainy")
    contexts = [ContextRecord(int(h), WEATHER[w], bool(hd)) for h, w, hd in zip(hours, weather, holiday)]

    poi, roles, kinds = _poi_counts(rng, cfg, N)
    transport, lags = _lines(rng, cfg.rows, cfg.cols, cfg.n_lines)

    # (c) smooth base field plus a drifting smooth perturbation
    level = 1.0 + 0.4 * _smooth(rng, (cfg.rows, cfg.cols), 1.5).reshape(N)
    level = np.clip(level, 0.2, None)
    shocks = _smooth(rng, (T, cfg.rows, cfg.cols), (0, 1.5, 1.5)).reshape(T, N)
    drift = np.empty_like(shocks)
    drift[0] = shocks[0]
    rho = 0.9
    for k in range(1, T):
        drift[k] = rho * drift[k - 1] + np.sqrt(1 - rho ** 2) * shocks[k]
    night = 1.0 - 0.3 * np.exp(-((hours - 14.0) / 5.0) ** 2)
    base = cfg.base_level * level[None, :] * night[:, None] * (1.0 + cfg.base_variation * drift)

    # (a) POI-driven visitors
    counts = poi.astype(np.float64)
    shop_cols = [c for c, r in enumerate(roles) if r in SHOP_ROLES]
    office_cols = [c for c, r in enumerate(roles) if r == "office"]
    shop_mass = counts[:, shop_cols].sum(axis=1) if shop_cols else np.zeros(N)
    office_mass = counts[:, office_cols].sum(axis=1) if office_cols else np.zeros(N)
    shop_mass = shop_mass / max(shop_mass.max(), 1.0)
    office_mass = office_mass / max(office_mass.max(), 1.0)
    shop_curve = np.exp(-((hours - 14.0) / 3.5) ** 2) * (hours >= 9) * (hours <= 21)
    work_curve = ((hours >= 9) & (hours <= 18)).astype(np.float64)
    shop_intensity = np.exp(0.25 * rng.standard_normal(cfg.days))[day]
    work_intensity = np.exp(0.15 * rng.standard_normal(cfg.days))[day]
    damp = np.where(rainy, cfg.rain_damping, 1.0)
    shop_day = np.where(business, 1.0, 0.6)
    visitors = cfg.hub_amplitude * (
        (shop_curve * shop_intensity * damp * shop_day)[:, None] * shop_mass[None, :]
        + (0.5 * work_curve * work_intensity * business)[:, None] * office_mass[None, :]
    )

    # (b) rush-hour surges along lines, lagged for the back half of each line;
    # the line shock is AR(1) so the previous hour's line level is informative
    rush = np.array([RUSH.get(h, 0.0) for h in range(24)])
    line_intensity = np.exp(0.3 * rng.standard_normal((cfg.days, max(cfg.n_lines, 1))))
    innov = rng.standard_normal((T, max(cfg.n_lines, 1)))
    line_shock = np.empty_like(innov)
    line_shock[0] = innov[0]
    a = cfg.line_persistence
    for k in range(1, T):
        line_shock[k] = a * line_shock[k - 1] + np.sqrt(1 - a ** 2) * innov[k]
    station_shock = cfg.station_noise * rng.standard_normal((T, N))
    surge = np.zeros((T, N))
    for m in range(cfg.n_lines):
        for n in np.flatnonzero(transport[:, m]):
            lag = lags[n, m]
            src = np.clip(t - lag, 0, None)
            profile = rush[hours[src]] * business[src]
            amount = (line_intensity[day[src], m] * (1.0 + cfg.line_noise * line_shock[src, m])
                      + station_shock[:, n])
            surge[:, n] += cfg.line_amplitude * profile * np.clip(amount, 0.0, None)

    noise = cfg.noise * rng.standard_normal((T, N)) if cfg.noise > 0 else 0.0
    series = np.rint(np.clip(base + visitors + surge + noise, 0.0, None))
    return CityScenario(grid, poi.astype(np.int64), transport, series, contexts, seed,
                        {"config": asdict(cfg), "seed": int(seed)})
