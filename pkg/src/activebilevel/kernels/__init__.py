"""Hot loops: simplex pivoting and decision-tree split search / traversal."""
