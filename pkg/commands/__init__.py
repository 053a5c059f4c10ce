from . import profile, simulate, rates, verify
