"""Incident analytics for integrated rail and bus networks.

Path throughput and redundancy under blockages, AVL headways, tap-in demand
deviations, regular-passenger choice inference and a binary logit, plus a
seeded scenario generator and a command line (``transit-incident``).
"""

from .errors import TransitIncidentError
from .network import IncidentSpec, TransitNetwork, load_incident, load_network
from .paths import PathFilter, incident_path_sets, k_shortest_paths
from .redundancy import nrui, path_throughput, redundancy_report, throughput

__version__ = "0.1.0"

__all__ = [
    "IncidentSpec",
    "PathFilter",
    "TransitIncidentError",
    "TransitNetwork",
    "incident_path_sets",
    "k_shortest_paths",
    "load_incident",
    "load_network",
    "nrui",
    "path_throughput",
    "redundancy_report",
    "throughput",
]
