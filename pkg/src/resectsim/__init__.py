"""Desk-scale simulator for laser-guided tumor mapping and resection planning.

The package covers the full loop against synthetic sensors: volumetric
surface scanning, camera registration, laser rig calibration, point-wise
spectral classification, boundary mapping, trajectory planning, virtual
resection, and region-overlap evaluation.
"""

__version__ = "0.1.0"
