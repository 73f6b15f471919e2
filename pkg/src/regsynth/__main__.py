from regsynth.cli import main

main()
