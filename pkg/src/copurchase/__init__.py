"""Co-purchase network toolkit.

Parses the SNAP amazon-meta product dump, builds the undirected co-purchase
graph, computes its structural statistics and community modularity scores,
and trains/evaluates link predictors (random forest baseline and a one-hop
GraphSAGE variant) for newly listed, isolated products.
"""

__version__ = "0.1.0"
