"""IMU preintegrated features for deep inertial odometry."""

__version__ = "0.1.0"
