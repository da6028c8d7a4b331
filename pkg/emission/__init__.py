"""
Emission of trapped lattice atoms into a free-atom reservoir
"""
