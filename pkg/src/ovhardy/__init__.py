"""Numerical verification toolkit for operator-valued local Hardy spaces."""
