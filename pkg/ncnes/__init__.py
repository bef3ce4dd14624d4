# ncnes/: multi-process natural evolution strategies with diversity control
