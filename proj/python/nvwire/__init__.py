"""NV wide-field magnetometry simulation and analysis of segmented nanowires."""

from ._nvwire import (
    ConfigError,
    Error,
    FormatError,
    __version__,
    default_config,
    normalize_config,
    parse_map_csv,
    parse_ovf,
    resonances,
    run_cli,
    simulate,
    write_ovf,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "__version__",
    "default_config",
    "normalize_config",
    "parse_map_csv",
    "parse_ovf",
    "resonances",
    "run_cli",
    "simulate",
    "write_ovf",
]
