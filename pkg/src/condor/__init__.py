"""condor: conditioned neural control for agile quadrotor racing.

A desk-scale stack: rigid-body quadrotor simulator, drone-racing RL
environment, six conditioning network architectures (including feature-wise
linear modulation), a PPO trainer, an evaluation harness, and a live cockpit
server for steering a trained policy's conditioning signal in real time.
"""

__version__ = "0.1.0"
