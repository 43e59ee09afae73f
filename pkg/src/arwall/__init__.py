"""arwall: a multi-client engine for large shared displays with per-user AR overlays.

The package models a wall-sized interactive display showing coordinated
visualizations of one tabular dataset. A single authoritative server holds
the session state (users, poses, selections, annotations, lenses, technique
toggles); for every connected analyst it composes a personal augmented
reality scene anchored to the display, and synchronizes everything over a
length-prefixed JSON wire protocol. A deterministic simulator drives
scripted multi-analyst sessions with optional network fault injection.
"""

__version__ = "0.1.0"
