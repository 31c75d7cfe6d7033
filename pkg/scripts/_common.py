"""Shared setup for the experiment scripts: single-KPO operating point and CLI flags."""
import argparse
from pathlib import Path

from kposim.config import bundled_config, load_config
from kposim.model import KpoParams, mhz
from kposim.sweep import calibrate_pump_from_dip


def device_params(calibrate_to_mhz: float | None = None) -> KpoParams:
    params = load_config(bundled_config("single_kpo.cfg")).kpo_params()
    if calibrate_to_mhz is not None:
        params = params.with_(pump_amplitude=calibrate_pump_from_dip(mhz(calibrate_to_mhz), params))
    return params


def base_parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument("--dim", type=int, default=40)
    parser.add_argument("--t-end-us", type=float, default=20.0)
    parser.add_argument("--calibrate", type=float, default=None, metavar="MHZ",
                        help="re-fit p so that E_02/2pi equals this value before running")
    return parser
