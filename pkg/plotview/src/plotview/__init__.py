"""Figure rendering for exported decision-grid and sweep CSVs."""

from .render import (SchemaError, read_boundary_csv, read_points_csv,
                     read_sweep_csv, render_boundary, render_sweep)

__version__ = "0.1.0"
