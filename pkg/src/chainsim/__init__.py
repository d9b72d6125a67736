"""chainsim: discrete-event simulation of serverless microservice chains.

Compares five container resource-management policies (one-to-one reactive,
static batching, dynamic batching with reactive scaling, predictive
non-batching, and batching with predictive scaling) on container counts, SLO
compliance, cold starts, utilization, and cluster energy.
"""

__version__ = "0.1.0"
