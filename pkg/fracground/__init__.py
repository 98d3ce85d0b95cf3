"""Ground states of the fractional Schrodinger equation by constrained minimization."""
