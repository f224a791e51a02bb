# solvers/__init__.py
