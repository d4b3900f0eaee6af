"""predictive-lasso: LASSO для прогнозных регрессий с разной персистентностью предикторов."""
