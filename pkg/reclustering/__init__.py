"""reclustering - choose the clustering level for cluster-robust standard errors"""

__version__ = "0.1.0"
__author__ = "reclustering contributors"
__description__ = "Reclustering permutation test for the clustering level of CRSEs"

__all__ = ["__version__"]
