"""ubimap: a desk-scale testbed for fixed-camera indoor mapping.

The pipeline: place depth-camera footprints over a gridded room, calibrate
the cameras into one global frame from shared landmarks, fuse per-camera
evidence into a live occupancy map, localize robots against it, and
broadcast the map to robot clients over a simulated lossy network.
"""

__version__ = "0.1.0"
