from nodereg.flow.dynamics import Dynamics, LinearDynamics, VelocityDynamics, boundary_mask
from nodereg.flow.integrator import Trajectory, compose_check, integrate, integrate_dynamics, step
from nodereg.flow.memory import MemoryLedger
