"""External-force guided curriculum learning on planar legged bodies."""
