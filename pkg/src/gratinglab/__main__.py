from gratinglab.cli import main

main()
