"""Run directories, reports and the command line around an optimization run."""
