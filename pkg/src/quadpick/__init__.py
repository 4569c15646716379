"""Desk-scale simulator and mission stack for operator-guided pick-and-return.

A quadruped base with a 4-DOF arm navigates to a room chosen by the
operator, scans, approaches a clicked object, sits, and grasps a
selected target with a candidate-filtering pipeline before carrying it
home.  Everything runs headless and deterministically; the web bridge
exposes the same mission over a JSON WebSocket protocol.
"""

__version__ = "0.1.0"
