"""reclustering core package"""
