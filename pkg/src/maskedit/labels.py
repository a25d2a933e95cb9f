"""Ordered part-label vocabularies and their display palettes."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LabelSchema:
    """Ordered part-label vocabulary of a dataset.

    ``names[i]`` is the human-readable name of label id ``i`` and
    ``palette[i]`` its display color. Palette colors must be distinct so
    indexed-palette masks can be recovered from rendered RGB.
    """

    names: tuple[str, ...]
    palette: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.palette):
            raise ValueError("names and palette must have equal length")
        if len(self.names) < 2:
            raise ValueError("a label schema needs at least 2 labels")
        if len(set(self.palette)) != len(self.palette):
            raise ValueError("palette colors must be distinct")

    @property
    def num_labels(self) -> int:
        return len(self.names)

    def flat_palette(self) -> list[int]:
        """Palette as the flat [r0, g0, b0, r1, ...] list PNG writers expect."""
        out: list[int] = []
        for rgb in self.palette:
            out.extend(rgb)
        return out

    def to_dict(self) -> dict:
        return {"names": list(self.names), "palette": [list(c) for c in self.palette]}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSchema":
        return cls(
            names=tuple(d["names"]),
            palette=tuple(tuple(c) for c in d["palette"]),
        )

    @classmethod
    def generic(cls, num_labels: int) -> "LabelSchema":
        """Fallback schema with distinct golden-angle hues, label 0 dark."""
        import colorsys

        palette: list[tuple[int, int, int]] = [(30, 30, 36)]
        for i in range(1, num_labels):
            hue = (i * 0.61803398875) % 1.0
            r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
            palette.append((int(r * 255), int(g * 255), int(b * 255)))
        names = tuple(f"label_{i}" for i in range(num_labels))
        return cls(names=names, palette=tuple(palette))
