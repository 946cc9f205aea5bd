# Configuration, logging, errors and file I/O
