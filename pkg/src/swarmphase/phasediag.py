"""Phase diagrams: frequency-colored cell grids rendered to SVG and CSV.

Each cell aggregates repeated trials at one parameter point. Color encodes
how often the behavior occurred: solid success hue at 10/10, fading to
white at 5/10, then into the failure hue down to 0/10. Rendering is
byte-deterministic so identical inputs always produce identical files.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from typing import Optional
from xml.sax.saxutils import escape

from .core import Controller
from .sweep import DEG, PhaseCell

_HEX_RE = re.compile(r"^#[0-9a-fA-F]{6}$")

AXIS_UNITS = {"N": "", "v": "m/s", "omega": "deg/s", "gamma": "m", "phi": "deg"}

# cell edge and margins, px
_CELL = 34
_LEFT = 84
_TOP = 56
_BOTTOM = 58
_RIGHT = 150


@dataclass(frozen=True)
class ColorRule:
    """Hue pair for the frequency coloring, with white at the 50% tie."""

    success_hue: str
    failure_hue: str
    tie_color: str = "#ffffff"

    def __post_init__(self) -> None:
        for name in ("success_hue", "failure_hue", "tie_color"):
            val = getattr(self, name)
            if not _HEX_RE.match(val):
                raise ValueError(f"{name}: expected #rrggbb, got {val!r}")


PALETTES = {
    "green-red": ColorRule(success_hue="#1a9850", failure_hue="#d73027"),
    "green-orange": ColorRule(success_hue="#1a9850", failure_hue="#e08214"),
    "blue-red": ColorRule(success_hue="#4575b4", failure_hue="#d73027"),
}

DEFAULT_PALETTE = {
    Controller.MILLING: "green-red",
    Controller.DIFFUSION: "green-orange",
}


def _parse_hex(color: str) -> tuple[int, int, int]:
    return int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16)


def _blend_from_white(hue: str, intensity: float) -> str:
    """Linear white-to-hue blend; intensity 0 is white, 1 is the full hue."""
    channels = _parse_hex(hue)
    out = tuple(round(255 + (c - 255) * intensity) for c in channels)
    return "#{:02x}{:02x}{:02x}".format(*out)


def signed_intensity(successes: int, trials: int) -> float:
    """Success fraction mapped to [-1, 1]: -1 all-fail, 0 tie, +1 all-success."""
    if trials < 1:
        raise ValueError(f"trials: must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside [0, {trials}]")
    return (successes / trials - 0.5) / 0.5


def color_for(successes: int, trials: int, rule: ColorRule) -> str:
    """Map a success count to its cell color.

    All-success gives the full success hue, all-fail the full failure hue,
    an exact tie white; in between, intensity grows linearly with distance
    from the tie.
    """
    s = signed_intensity(successes, trials)
    if s == 0:
        return rule.tie_color
    if s > 0:
        return _blend_from_white(rule.success_hue, s)
    return _blend_from_white(rule.failure_hue, -s)


@dataclass(frozen=True)
class PhaseDiagram:
    """A dense 2-axis grid of phase cells ready for rendering.

    cells is row-major: cells[iy][ix] belongs to y_axis value iy and
    x_axis value ix. fixed_params holds the user-unit parameters that were
    not swept, for the title line.
    """

    x_axis: tuple
    y_axis: tuple
    cells: tuple
    behavior: Controller
    palette: ColorRule
    fixed_params: dict
    trials_per_point: int

    def __post_init__(self) -> None:
        _, y_values = self.y_axis
        _, x_values = self.x_axis
        if len(self.cells) != len(y_values):
            raise ValueError(
                f"cell rows {len(self.cells)} != y axis length {len(y_values)}"
            )
        for row in self.cells:
            if len(row) != len(x_values):
                raise ValueError(
                    f"cell row length {len(row)} != x axis length "
                    f"{len(x_values)}"
                )
            for cell in row:
                if cell.trials < 1:
                    raise ValueError("every cell needs trials >= 1")

    @classmethod
    def from_cells_obj(
        cls, obj: dict, palette: Optional[str] = None
    ) -> "PhaseDiagram":
        """Build from a parsed cells JSON object (see sweep.load_cells).

        The first sweep axis becomes the y axis, the second the x axis,
        matching the canonical point order (second axis fastest).
        """
        axes = obj["axes"]
        if len(axes) != 2:
            raise ValueError(
                f"phase diagram needs exactly 2 axes, got {len(axes)}"
            )
        behavior = Controller(obj["behavior"])
        rule = PALETTES[palette if palette else DEFAULT_PALETTE[behavior]]
        y_name, y_values = axes[0]["name"], tuple(axes[0]["values"])
        x_name, x_values = axes[1]["name"], tuple(axes[1]["values"])
        nx, ny = len(x_values), len(y_values)
        by_index = {}
        for entry in obj["cells"]:
            cell = PhaseCell.from_dict(entry)
            by_index[cell.point_index] = cell
        rows = []
        for iy in range(ny):
            row = []
            for ix in range(nx):
                point_index = iy * nx + ix
                if point_index not in by_index:
                    raise ValueError(f"missing cell for point {point_index}")
                cell = by_index[point_index]
                expect = {y_name: y_values[iy], x_name: x_values[ix]}
                if cell.point_coords != expect:
                    raise ValueError(
                        f"cell {point_index} coords {cell.point_coords} "
                        f"do not match axes {expect}"
                    )
                row.append(cell)
            rows.append(tuple(row))
        fixed = _fixed_params_user_units(
            obj.get("base_params", {}), {x_name, y_name}
        )
        return cls(
            x_axis=(x_name, x_values),
            y_axis=(y_name, y_values),
            cells=tuple(rows),
            behavior=behavior,
            palette=rule,
            fixed_params=fixed,
            trials_per_point=int(obj.get("trials_per_point", 0) or
                                 obj["cells"][0].get("trials", 1)),
        )


def _fixed_params_user_units(base_params: dict, swept: set) -> dict:
    """Convert internal-unit base params to display units, minus swept axes."""
    if not base_params:
        return {}
    out = {}
    if "N" not in swept and "n_agents" in base_params:
        out["N"] = base_params["n_agents"]
    if "v" not in swept and "speed" in base_params:
        out["v"] = base_params["speed"]
    if "omega" not in swept and "turn_rate" in base_params:
        out["omega"] = base_params["turn_rate"] / DEG
    if "gamma" not in swept and "gamma" in base_params:
        out["gamma"] = base_params["gamma"]
    if "phi" not in swept and "phi" in base_params:
        out["phi"] = base_params["phi"] / DEG
    return out


def _fmt(value) -> str:
    """Compact deterministic number formatting for labels."""
    if isinstance(value, float) and value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return f"{value:g}"


def _axis_label(name: str) -> str:
    unit = AXIS_UNITS.get(name, "")
    return f"{name} ({unit})" if unit else name


def render_svg(diagram: PhaseDiagram, config: Optional[dict] = None) -> str:
    """Emit the diagram as a standalone SVG document string."""
    x_name, x_values = diagram.x_axis
    y_name, y_values = diagram.y_axis
    nx, ny = len(x_values), len(y_values)
    width = _LEFT + nx * _CELL + _RIGHT
    height = _TOP + ny * _CELL + _BOTTOM

    provenance = {
        "behavior": diagram.behavior.value,
        "x_axis": {"name": x_name, "values": list(x_values)},
        "y_axis": {"name": y_name, "values": list(y_values)},
        "trials_per_point": diagram.trials_per_point,
        "palette": {
            "success_hue": diagram.palette.success_hue,
            "failure_hue": diagram.palette.failure_hue,
            "tie_color": diagram.palette.tie_color,
        },
    }
    if config is not None:
        provenance["config"] = config

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    out.append(f"<desc>{escape(json.dumps(provenance, sort_keys=True))}</desc>")
    out.append(
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>'
    )

    title = f"{diagram.behavior.value} phase diagram"
    out.append(
        f'<text x="{_LEFT}" y="24" font-family="sans-serif" '
        f'font-size="16" fill="#000000">{escape(title)}</text>'
    )
    fixed_bits = [
        f"{key}={_fmt(val)}" for key, val in diagram.fixed_params.items()
    ]
    fixed_bits.append(f"trials={diagram.trials_per_point}")
    out.append(
        f'<text x="{_LEFT}" y="42" font-family="sans-serif" '
        f'font-size="11" fill="#444444">{escape("  ".join(fixed_bits))}</text>'
    )

    # cells; y axis increases upward
    for iy in range(ny):
        for ix in range(nx):
            cell = diagram.cells[iy][ix]
            color = color_for(cell.successes, cell.trials, diagram.palette)
            px = _LEFT + ix * _CELL
            py = _TOP + (ny - 1 - iy) * _CELL
            out.append(
                f'<rect class="cell" x="{px}" y="{py}" width="{_CELL}" '
                f'height="{_CELL}" fill="{color}" stroke="#cccccc" '
                f'stroke-width="1"/>'
            )

    # tick labels
    for ix, val in enumerate(x_values):
        cx = _LEFT + ix * _CELL + _CELL // 2
        out.append(
            f'<text class="tick" x="{cx}" y="{_TOP + ny * _CELL + 16}" '
            f'font-family="sans-serif" font-size="10" text-anchor="middle" '
            f'fill="#000000">{escape(_fmt(val))}</text>'
        )
    for iy, val in enumerate(y_values):
        cy = _TOP + (ny - 1 - iy) * _CELL + _CELL // 2 + 4
        out.append(
            f'<text class="tick" x="{_LEFT - 8}" y="{cy}" '
            f'font-family="sans-serif" font-size="10" text-anchor="end" '
            f'fill="#000000">{escape(_fmt(val))}</text>'
        )

    # axis titles
    out.append(
        f'<text x="{_LEFT + nx * _CELL // 2}" y="{_TOP + ny * _CELL + 40}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle" '
        f'fill="#000000">{escape(_axis_label(x_name))}</text>'
    )
    ylab_y = _TOP + ny * _CELL // 2
    out.append(
        f'<text x="20" y="{ylab_y}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 20 {ylab_y})" '
        f'fill="#000000">{escape(_axis_label(y_name))}</text>'
    )

    # legend: the color rule at 11 fractions, top = all-success
    lx = _LEFT + nx * _CELL + 36
    out.append(
        f'<text x="{lx}" y="{_TOP - 8}" font-family="sans-serif" '
        f'font-size="11" fill="#000000">success fraction</text>'
    )
    swatch = 18
    for row, tenths in enumerate(range(10, -1, -1)):
        color = color_for(tenths, 10, diagram.palette)
        sy = _TOP + row * swatch
        out.append(
            f'<rect class="legend" x="{lx}" y="{sy}" width="{swatch}" '
            f'height="{swatch}" fill="{color}" stroke="#cccccc" '
            f'stroke-width="1"/>'
        )
        if tenths in (0, 5, 10):
            out.append(
                f'<text x="{lx + swatch + 6}" y="{sy + 13}" '
                f'font-family="sans-serif" font-size="10" '
                f'fill="#000000">{tenths / 10:.1f}</text>'
            )

    out.append("</svg>")
    return "\n".join(out) + "\n"


def render(diagram: PhaseDiagram, path, config: Optional[dict] = None) -> None:
    """Write the diagram as a standalone SVG file."""
    svg = render_svg(diagram, config)
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)


def export_matrix(diagram: PhaseDiagram, path) -> None:
    """Write success fractions as CSV.

    Header row carries the x-axis values, the first column the y-axis
    values, and the body the success fraction of each cell to 3 decimals.
    """
    x_name, x_values = diagram.x_axis
    y_name, y_values = diagram.y_axis
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"{y_name}/{x_name}"] + [_fmt(v) for v in x_values]
        )
        for iy, yval in enumerate(y_values):
            fractions = [
                f"{cell.successes / cell.trials:.3f}"
                for cell in diagram.cells[iy]
            ]
            writer.writerow([_fmt(yval)] + fractions)


def diagram_from_cells_file(
    path, palette: Optional[str] = None
) -> tuple[PhaseDiagram, dict]:
    """Load a cells JSON file and build its diagram plus config echo."""
    from .sweep import load_cells

    obj = load_cells(path)
    diagram = PhaseDiagram.from_cells_obj(obj, palette=palette)
    return diagram, obj.get("config", {})
