"""
FermiHubLib package: lattice model, circuits, simulators, mitigation and analysis.
"""
