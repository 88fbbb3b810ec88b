# bataxis test suite
