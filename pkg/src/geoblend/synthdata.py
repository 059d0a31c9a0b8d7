"""Synthetic data generators: separable-GP observation tables and raw sensor
exports. Used by the test suite and handy for demoing the CLI end to end
(``python -m geoblend.synthdata --help``).

The GP sampler exploits separability on a full sensors-x-hours grid: with
Sigma = Sigma_s (x) Sigma_t, a draw is L_s Z L_t' for Z iid standard normal,
so no n x n factorization is ever formed.
"""

from __future__ import annotations

import json

import numpy as np

from .covariance import CovarianceParams, haversine_km
from .dataset import ObservationTable

CA_BBOX = (-124.48, -114.13, 32.53, 42.01)


def _chol_psd(mat: np.ndarray) -> np.ndarray:
    jitter = 1e-10 * float(np.mean(np.diag(mat)))
    return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))


def separable_gp_field(lon, lat, hours, params: CovarianceParams, rng, metric: str = "haversine") -> np.ndarray:
    """Draw one mean-zero separable GP field on the sensors x hours grid."""
    if metric == "euclidean":
        d = np.hypot(lon[:, None] - lon[None, :], lat[:, None] - lat[None, :])
    else:
        d = haversine_km(lon[:, None], lat[:, None], lon[None, :], lat[None, :])
    sigma_s = params.sigma_s**2 * np.exp(-d / params.rho_s)
    dt = np.abs(hours[:, None] - hours[None, :])
    sigma_t = params.sigma_t**2 * np.exp(-dt / params.rho_t)
    z = rng.standard_normal((lon.shape[0], hours.shape[0]))
    return _chol_psd(sigma_s) @ z @ _chol_psd(sigma_t).T


def gp_dataset(
    n_sensors: int,
    n_hours: int,
    params: CovarianceParams,
    beta=(2.0, 0.0, 0.0),
    bbox=(0.0, 1.0, 0.0, 1.0),
    seed: int = 0,
    metric: str = "haversine",
) -> ObservationTable:
    """Full sensors-x-hours observation table drawn from the GP model.

    log_pm25 = beta0 + beta1*lon + beta2*lat + W(s,t) + eps with eps iid
    N(0, nugget); pm25_corrected is the exp of that (display only).
    """
    rng = np.random.default_rng(seed)
    lon_min, lon_max, lat_min, lat_max = bbox
    lon = rng.uniform(lon_min, lon_max, n_sensors)
    lat = rng.uniform(lat_min, lat_max, n_sensors)
    hours = np.arange(n_hours, dtype=np.float64)
    field = separable_gp_field(lon, lat, hours, params, rng, metric)
    noise = rng.normal(0.0, np.sqrt(params.nugget), size=field.shape) if params.nugget > 0 else 0.0
    trend = beta[0] + beta[1] * lon[:, None] + beta[2] * lat[:, None]
    log_pm = trend + field + noise

    ids = np.array([f"s{i:04d}" for i in range(n_sensors)], dtype=object)
    sensor_col = np.repeat(ids, n_hours)
    hour_col = np.tile(np.arange(n_hours, dtype=np.int64), n_sensors)
    return ObservationTable(
        sensor_id=sensor_col,
        hour=hour_col,
        lon=np.repeat(lon, n_hours),
        lat=np.repeat(lat, n_hours),
        pm25_corrected=np.exp(log_pm).ravel(),
        log_pm25=log_pm.ravel(),
    )


def raw_records(
    n_sensors: int = 5,
    n_hours: int = 3,
    per_hour: int = 30,
    seed: int = 0,
    bbox=CA_BBOX,
    start_epoch: int = 1_546_300_800,  # 2019-01-01T00:00:00Z
    junk: bool = True,
):
    """Raw sub-hourly sensor rows as dicts, optionally salted with known-bad
    rows (sentinel temperatures, out-of-range RH, disagreeing channels)."""
    rng = np.random.default_rng(seed)
    lon_min, lon_max, lat_min, lat_max = bbox
    lon = rng.uniform(lon_min, lon_max, n_sensors)
    lat = rng.uniform(lat_min, lat_max, n_sensors)
    rows = []
    for s in range(n_sensors):
        base_pm = rng.uniform(4.0, 40.0)
        for h in range(n_hours):
            level = base_pm * rng.uniform(0.7, 1.3)
            for k in range(per_hour):
                ts = start_epoch + h * 3600 + int(k * (3600 / per_hour))
                a = max(0.0, level + rng.normal(0.0, 1.0))
                b = a + rng.normal(0.0, 0.5)
                rows.append(
                    {
                        "sensor_id": f"pa{s:03d}",
                        "timestamp": ts,
                        "pm25_a": round(a, 2),
                        "pm25_b": round(max(0.0, b), 2),
                        "temperature": round(rng.uniform(40.0, 95.0), 1),
                        "rh": round(rng.uniform(20.0, 80.0), 1),
                        "lon": round(lon[s], 5),
                        "lat": round(lat[s], 5),
                    }
                )
    if junk and rows:
        bad_t = dict(rows[0])
        bad_t["temperature"] = 2147483447
        bad_t2 = dict(rows[1])
        bad_t2["temperature"] = -224
        bad_rh = dict(rows[2])
        bad_rh["rh"] = 101.0
        bad_ch = dict(rows[3])
        bad_ch["pm25_a"] = 100.0
        bad_ch["pm25_b"] = 5.0
        rows.extend([bad_t, bad_t2, bad_rh, bad_ch])
    return rows


def write_ndjson(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def main(argv=None):
    import argparse

    ap = argparse.ArgumentParser(description="write a synthetic raw-sensor NDJSON export")
    ap.add_argument("--out", required=True)
    ap.add_argument("--sensors", type=int, default=25)
    ap.add_argument("--hours", type=int, default=48)
    ap.add_argument("--per-hour", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--clean", action="store_true", help="do not inject known-bad rows")
    args = ap.parse_args(argv)
    rows = raw_records(args.sensors, args.hours, args.per_hour, seed=args.seed, junk=not args.clean)
    write_ndjson(rows, args.out)
    print(f"wrote {len(rows)} raw rows to {args.out}")


if __name__ == "__main__":
    main()
