from critwave.cli import main

raise SystemExit(main())
