"""
Distance-aware private set intersection: Hamming and integer variants over
polynomial set reconciliation, with ideal OLE/VOLE and exact-PSI backends.
"""

__version__ = '0.1.0'
