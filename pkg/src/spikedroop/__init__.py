"""Spiking neuro-controllers for droop-controlled DC microgrids."""
