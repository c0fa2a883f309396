"""Convert a PEMS-style ``.npz`` archive into an MCTD dataset file.

The public archives store ``data`` as [T, n, 3] in (flow, occupancy, speed)
order; MCTD expects (flow, speed, occupancy) with occupancy as a fraction.
"""

import sys
from pathlib import Path
from typing import List, Optional

# Add parent directory to path
parent_dir = Path(__file__).parent.parent
if str(parent_dir) not in sys.path:
    sys.path.insert(0, str(parent_dir))

import numpy as np

from src.data.dataset import TrafficTensorFile, save_dataset

# Source channel index of each MCTD channel
SOURCE_ORDER = {"flow": 0, "occupancy": 1, "speed": 2}


def convert(
    source: str,
    out: str,
    key: str = "data",
    interval_minutes: int = 5,
    start_slot: int = 0,
    start_dow: int = 0,
    occupancy_percent: Optional[bool] = None,
    sensor_ids: Optional[List[str]] = None,
) -> TrafficTensorFile:
    """
    Reorder channels, rescale occupancy and write the MCTD file.

    Args:
        source: ``.npz`` archive
        out: Destination file
        key: Array name inside the archive
        interval_minutes: Sampling interval
        start_slot: Slot of the first step within its day
        start_dow: Weekday of the first step, 0 = Monday
        occupancy_percent: Divide occupancy by 100; detected from the maximum when None
        sensor_ids: Optional ids, one per sensor

    Returns:
        The converted dataset
    """
    with np.load(source) as archive:
        if key not in archive:
            raise KeyError(f"'{key}' not found in {source}; available: {list(archive.keys())}")
        array = np.asarray(archive[key], dtype=np.float64)
    if array.ndim != 3 or array.shape[2] < 3:
        raise ValueError(f"expected [T, n, 3] data, got {array.shape}")

    flow = array[:, :, SOURCE_ORDER["flow"]]
    occupancy = array[:, :, SOURCE_ORDER["occupancy"]]
    speed = array[:, :, SOURCE_ORDER["speed"]]
    if occupancy_percent is None:
        occupancy_percent = float(np.nanmax(occupancy)) > 1.0
    if occupancy_percent:
        occupancy = occupancy / 100.0
        print("Rescaled occupancy from percent to fraction")

    raw = np.stack([flow, speed, np.clip(occupancy, 0.0, 1.0)], axis=-1)
    dataset = TrafficTensorFile(
        raw=raw,
        interval_minutes=interval_minutes,
        start_slot=start_slot,
        start_dow=start_dow,
        sensor_ids=sensor_ids or [],
    )
    save_dataset(dataset, out)
    print(f"✅ Wrote {out}: T={dataset.n_steps}, n={dataset.n_nodes}")
    return dataset


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Convert a PEMS .npz archive to an MCTD dataset")
    parser.add_argument("source", help="Input .npz file")
    parser.add_argument("out", help="Output dataset file")
    parser.add_argument("--key", default="data", help="Array name inside the archive")
    parser.add_argument("--interval", type=int, default=5, help="Sampling interval in minutes")
    parser.add_argument("--start-slot", type=int, default=0)
    parser.add_argument("--start-dow", type=int, default=0, help="Weekday of the first step, 0 = Monday")
    parser.add_argument("--sensor-ids", help="Text file with one sensor id per line")
    percent = parser.add_mutually_exclusive_group()
    percent.add_argument("--occupancy-percent", dest="occupancy_percent", action="store_true", default=None)
    percent.add_argument("--occupancy-fraction", dest="occupancy_percent", action="store_false")

    args = parser.parse_args()
    ids = None
    if args.sensor_ids:
        ids = [line.strip() for line in Path(args.sensor_ids).read_text(encoding="utf-8").splitlines() if line.strip()]
    try:
        convert(args.source, args.out, args.key, args.interval, args.start_slot, args.start_dow,
                args.occupancy_percent, ids)
    except Exception as e:
        print(f"❌ Conversion failed: {e}")
        sys.exit(2)
