from django.apps import AppConfig


class ButterflyAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'butterfly_app'
    verbose_name = 'Butterfly factorization bench'
