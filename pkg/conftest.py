# keeps the repository root on sys.path so that `vfhodge` imports under pytest
