"""hamcert: autonomous Hamiltonian certification and drift detection.

Simulates a certification protocol that needs only product-state
preparation and adaptive single-qubit measurements on the device under
test, plus an online CUSUM change detector built on top of it.  Desk
scale throughout: every statistical and quantum-mechanical claim is
checkable against exact oracles at small qubit counts.
"""

__version__ = "0.1.0"
