# Boussinesq Control Lab
