"""Stochastic simulators and numerical solvers for two dual population models.

One side: a mean-field system of interacting two-type Fisher-Wright diffusions
with selection and rare mutation, its excursion-driven droplet of advantageous
mass, and the McKean-Vlasov density limit.  Other side: a logistic branching
random walk whose occupied sites form a Crump-Mode-Jagers growth structure
with a colonization-equilibration limit.  A Monte Carlo harness checks the
moment and spatial dualities tying the two sides together.
"""

__version__ = "0.1.0"
