# Sphinx configuration of the crpsrft documentation

import os
import sys
from datetime import datetime

sys.path.insert(0, os.path.abspath('..'))

import crpsrft

# -- Project information -----------------------------------------------------

project = 'crpsrft'
author = 'the crpsrft developers'
copyright = f'{datetime.now().year}, {author}'
release = crpsrft.__version__

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
    'numpydoc.numpydoc',
]

# numpydoc
numpydoc_class_members_toctree = False
numpydoc_show_class_members = True
numpydoc_show_inherited_class_members = False

# the API pages are generated from doc/modules/api.rst
autosummary_generate = True
autodoc_member_order = 'bysource'
autodoc_default_options = {'members': True}

source_suffix = '.rst'
master_doc = 'index'
templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
primary_domain = 'py'

# -- Options for HTML output -------------------------------------------------

html_theme = 'tensorly_sphinx_theme'
html_static_path = []
html_theme_options = {
    'nav_links': [('Install', 'install'),
                  ('User Guide', 'user_guide/index'),
                  ('API', 'modules/api')],
    'external_nav_links': [('PyTorch', 'https://pytorch.org'), ('TensorLy', 'http://tensorly.org/dev')],
}

# -- Options for LaTeX output ------------------------------------------------

latex_documents = [
    (master_doc, 'crpsrft.tex', 'Retrofitting neural surrogates with the fair CRPS', author, 'manual'),
]
latex_elements = {
    'classoptions': ',oneside',
    'printindex': '',
    'preamble': r'\usepackage{amsmath}\usepackage{amsfonts}',
}
