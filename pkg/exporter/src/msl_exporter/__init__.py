"""Bridge from the torch training ecosystem to the MSLW container.

The engine side of the project knows only MSLW; everything that
understands torch modules lives here. `convert` turns an eval-mode
module into a ModelContainer (fusing batch norm into convolutions),
`export` writes it to disk, and `emit_golden` captures a full forward
pass as an activation bundle the engine test suite replays.
"""

from .convert import ExportError, ExportMeta, convert, export
from .golden import emit_golden

__all__ = ["ExportError", "ExportMeta", "convert", "export", "emit_golden"]
