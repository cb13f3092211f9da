# Services module for the numerical core of the control lab
