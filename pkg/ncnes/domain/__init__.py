# ncnes/domain/: distributions, gradients, optimizer loops
