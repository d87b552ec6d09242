// implemented in a later slice of the build
