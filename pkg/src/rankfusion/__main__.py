from rankfusion.cli import main

raise SystemExit(main())
